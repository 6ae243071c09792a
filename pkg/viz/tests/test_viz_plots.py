import importlib.resources
from pathlib import Path

import numpy as np
import pytest
from matplotlib.collections import LineCollection

from trajviz import (
    MetricsLog,
    TrajectoryData,
    parse_metrics_file,
    parse_trajectory_file,
    plot_track,
    plot_training,
    save,
)
from trajviz.metrics_format import FLOAT_COLUMNS, INT_COLUMNS

SAMPLES = importlib.resources.files("trajviz") / "samples"
SAMPLE_TRAJ = SAMPLES / "loop_single.traj"
SAMPLE_METRICS = SAMPLES / "metrics_sample.csv"


def by_gid(fig, gid):
    return fig.findobj(lambda art: art.get_gid() == gid)


def two_drone_data(n_steps=60):
    """Two drones flying offset circles over a two-waypoint, two-lap track."""
    track = {
        "name": "pair",
        "waypoints": [[1.5, 0.0, 1.0], [-1.5, 0.0, 1.0]],
        "waypoint_radius": 0.4,
        "workspace": {"lo": [-3.0, -3.0, 0.0], "hi": [3.0, 3.0, 3.0]},
        "laps": 2,
        "waypoint_noise_sigma": 0.0,
    }
    t = np.arange(n_steps) * 0.01
    ang = np.linspace(0.0, 2.0 * np.pi, n_steps)
    positions = np.zeros((n_steps, 2, 3))
    for d in range(2):
        positions[:, d, 0] = 1.5 * np.cos(ang)
        positions[:, d, 1] = 1.5 * np.sin(ang) + (0.4 if d else -0.4)
        positions[:, d, 2] = 1.0
    velocities = np.gradient(positions, 0.01, axis=0)
    quats = np.zeros((n_steps, 2, 4))
    quats[..., 0] = 1.0
    # both drones pass the four gates at the same quarter points
    counts = np.minimum(4, np.arange(n_steps) // (n_steps // 4 + 1) + 1) - 1
    counts = np.maximum(counts, 0)
    waypoint_counts = np.stack([counts, counts], axis=1)
    event_flags = np.zeros((n_steps, 2), dtype=int)
    bumps = np.flatnonzero(np.diff(counts) > 0) + 1
    event_flags[bumps, :] = 1
    return TrajectoryData(
        track=track, dt=0.01, seed=0,
        times=t, positions=positions, velocities=velocities, quats=quats,
        thrusts=np.full((n_steps, 2), 12.0),
        body_rates=np.zeros((n_steps, 2, 3)),
        waypoint_counts=waypoint_counts, event_flags=event_flags,
    )


def fake_log(label="runA", n_rows=8, offset=0.0):
    order = sorted(INT_COLUMNS) + list(FLOAT_COLUMNS)
    cols = {}
    rows = np.arange(1, n_rows + 1)
    for name in INT_COLUMNS:
        cols[name] = rows * (4096 if "step" in name else 1)
    for name in FLOAT_COLUMNS:
        cols[name] = rows.astype(float) + offset
    return MetricsLog(path=Path(label) / "metrics.csv",
                      column_order=order, columns=cols)


class TestTrackPlots:
    def test_topdown_sample_has_discs_at_track_radius(self):
        data = parse_trajectory_file(SAMPLE_TRAJ)
        fig = plot_track([data], kind="topdown")
        discs = by_gid(fig, "waypoint_disc")
        assert len(discs) == len(data.track["waypoints"])
        for disc in discs:
            assert disc.get_radius() == data.track["waypoint_radius"]
        assert len(by_gid(fig, "workspace")) == 1
        assert len(by_gid(fig, "path")) == 1
        save(fig, "/dev/null")

    def test_topdown_two_drones_get_distinct_colored_paths(self):
        fig = plot_track([two_drone_data()], kind="topdown", color_by="drone")
        paths = by_gid(fig, "path")
        assert len(paths) == 2
        assert paths[0].get_color() != paths[1].get_color()
        labels = [line.get_label() for line in paths]
        assert labels == ["drone 0", "drone 1"]
        save(fig, "/dev/null")

    def test_topdown_speed_coloring_adds_colorbar(self):
        data = two_drone_data()
        fig = plot_track([data], kind="topdown", color_by="speed")
        paths = by_gid(fig, "path")
        assert len(paths) == 2
        assert all(isinstance(p, LineCollection) for p in paths)
        assert paths[0].get_array().shape == (data.n_steps - 1,)
        assert len(fig.axes) == 2
        assert fig.axes[1].get_ylabel() == "speed [m/s]"
        save(fig, "/dev/null")

    def test_lap_coloring_produces_lap_legend(self):
        fig = plot_track([two_drone_data()], kind="topdown", color_by="lap")
        labels = [t.get_text() for t in fig.axes[0].get_legend().get_texts()]
        assert "lap 0" in labels
        assert "lap 1" in labels
        save(fig, "/dev/null")

    def test_topdown_pair_sample_draws_both_drones(self):
        data = parse_trajectory_file(SAMPLES / "loop_pair.traj")
        fig = plot_track([data], kind="topdown")
        assert len(by_gid(fig, "path")) == 2
        save(fig, "/dev/null")

    def test_3d_sample_has_disc_outlines(self):
        data = parse_trajectory_file(SAMPLE_TRAJ)
        fig = plot_track([data], kind="3d")
        assert len(by_gid(fig, "waypoint_disc")) == len(data.track["waypoints"])
        assert len(by_gid(fig, "path")) == 1
        assert fig.axes[0].get_zlabel() == "z [m]"
        save(fig, "/dev/null")

    def test_speed_profile_marks_waypoint_passes(self):
        data = two_drone_data()
        fig = plot_track([data], kind="speed-profile")
        lines = by_gid(fig, "speed")
        assert len(lines) == 2
        assert np.array_equal(lines[0].get_xdata(), data.times)
        assert len(by_gid(fig, "waypoint_pass")) == 2
        save(fig, "/dev/null")

    @pytest.mark.parametrize("kind", ["3d", "topdown", "speed-profile"])
    @pytest.mark.parametrize("color_by", ["drone", "speed", "lap"])
    def test_every_view_renders_to_a_file(self, tmp_path, kind, color_by):
        data = parse_trajectory_file(SAMPLE_TRAJ)
        out = tmp_path / f"{kind}-{color_by}.png"
        save(plot_track([data], kind=kind, color_by=color_by), out)
        assert out.stat().st_size > 1000

    def test_two_files_get_file_prefixed_labels(self):
        a, b = two_drone_data(), two_drone_data()
        fig = plot_track([a, b], kind="topdown", labels=["s0", "s1"])
        labels = [line.get_label() for line in by_gid(fig, "path")]
        assert labels == ["s0 drone 0", "s0 drone 1", "s1 drone 0", "s1 drone 1"]
        save(fig, "/dev/null")

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError, match="kind"):
            plot_track([two_drone_data()], kind="sideways")

    def test_unknown_color_mode_rejected(self):
        with pytest.raises(ValueError, match="color mode"):
            plot_track([two_drone_data()], color_by="altitude")

    def test_empty_input_rejected(self):
        with pytest.raises(ValueError):
            plot_track([])

    def test_plotting_does_not_touch_the_input_file(self, tmp_path):
        before = SAMPLE_TRAJ.read_bytes()
        data = parse_trajectory_file(SAMPLE_TRAJ)
        save(plot_track([data], kind="topdown"), tmp_path / "x.png")
        assert SAMPLE_TRAJ.read_bytes() == before


class TestTrainingPlots:
    def test_sample_metrics_render(self, tmp_path):
        log = parse_metrics_file(SAMPLE_METRICS)
        out = tmp_path / "training.png"
        save(plot_training([log]), out)
        assert out.stat().st_size > 1000

    def test_curves_use_per_drone_steps_and_column_values(self):
        log = fake_log()
        fig = plot_training([log])
        line, = by_gid(fig, "curve:mean_return")
        assert np.array_equal(line.get_xdata(), log["step_per_drone"])
        assert np.array_equal(line.get_ydata(), log["mean_return"])
        save(fig, "/dev/null")

    def test_four_panels_with_expected_titles(self):
        fig = plot_training([fake_log()])
        titles = [ax.get_title() for ax in fig.axes]
        assert "losses" in titles
        assert any("return" in t for t in titles)
        assert any("waypoints" in t for t in titles)
        assert len(fig.axes) == 4
        save(fig, "/dev/null")

    def test_two_logs_become_two_series_per_panel(self):
        fig = plot_training([fake_log("runA"), fake_log("runB", offset=3.0)])
        returns = by_gid(fig, "curve:mean_return")
        assert len(returns) == 2
        assert [l.get_label() for l in returns] == ["runA", "runB"]
        assert len(by_gid(fig, "curve:actor_loss")) == 2
        assert len(by_gid(fig, "curve:critic_loss")) == 2
        save(fig, "/dev/null")

    def test_empty_log_list_rejected(self):
        with pytest.raises(ValueError):
            plot_training([])
