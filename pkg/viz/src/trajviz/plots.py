"""Figure builders for track views, speed profiles and training curves.

Every function returns a matplotlib Figure so callers (and tests) can inspect
the artists; ``save`` writes and closes it. Waypoint discs carry the gid
``waypoint_disc`` and drone paths the gid ``path`` to make the structure
queryable without pixel inspection.
"""

from __future__ import annotations

import numpy as np

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
from matplotlib.collections import LineCollection  # noqa: E402
from matplotlib.lines import Line2D  # noqa: E402
from matplotlib.patches import Circle, Rectangle  # noqa: E402
from mpl_toolkits.mplot3d.art3d import Line3DCollection  # noqa: E402

TRACK_KINDS = ("3d", "topdown", "speed-profile")
COLOR_MODES = ("drone", "speed", "lap")

_DISC_STYLE = dict(color="0.55", alpha=0.30)


def _segments(points):
    """Consecutive-point segment array for a (T, dims) path."""
    return np.stack([points[:-1], points[1:]], axis=1)


def _lap_indices(data, drone):
    n_wp = len(data.track["waypoints"])
    return data.waypoint_counts[:, drone] // n_wp


def _path_label(n_files, file_label, drone):
    if n_files == 1:
        return f"drone {drone}"
    return f"{file_label} drone {drone}"


def plot_track(datas, kind="3d", color_by="drone", labels=None):
    """Render drone paths over the track layout.

    datas: list of TrajectoryData (typically one). The track geometry is
    taken from the first file. kind selects the view, color_by the path
    coloring; 'speed' replaces the per-drone legend with a colorbar.
    """
    if kind not in TRACK_KINDS:
        raise ValueError(f"unknown track plot kind {kind!r}")
    if color_by not in COLOR_MODES:
        raise ValueError(f"unknown color mode {color_by!r}")
    if not datas:
        raise ValueError("no trajectory data given")
    if labels is None:
        labels = [f"run {i}" for i in range(len(datas))]

    if kind == "speed-profile":
        return _speed_profile(datas, labels)
    if kind == "topdown":
        return _track_topdown(datas, color_by, labels)
    return _track_3d(datas, color_by, labels)


def _draw_discs_topdown(ax, track):
    radius = float(track["waypoint_radius"])
    for k, wp in enumerate(track["waypoints"]):
        disc = Circle((wp[0], wp[1]), radius, **_DISC_STYLE)
        disc.set_gid("waypoint_disc")
        ax.add_patch(disc)
        ax.annotate(str(k), (wp[0], wp[1]), ha="center", va="center",
                    fontsize=8, color="0.25")


def _speed_norm(datas):
    top = max(float(d.speeds().max()) for d in datas)
    return plt.Normalize(0.0, top if top > 0.0 else 1.0)


def _track_topdown(datas, color_by, labels):
    fig, ax = plt.subplots(figsize=(7.5, 7))
    track = datas[0].track
    _draw_discs_topdown(ax, track)
    lo, hi = track["workspace"]["lo"], track["workspace"]["hi"]
    box = Rectangle((lo[0], lo[1]), hi[0] - lo[0], hi[1] - lo[1],
                    fill=False, linestyle=":", color="0.4")
    box.set_gid("workspace")
    ax.add_patch(box)

    mappable = None
    if color_by == "speed":
        norm = _speed_norm(datas)
    for data, file_label in zip(datas, labels):
        for d in range(data.n_drones):
            xy = data.positions[:, d, :2]
            if color_by == "drone":
                line, = ax.plot(xy[:, 0], xy[:, 1], linewidth=1.4,
                                label=_path_label(len(datas), file_label, d))
                line.set_gid("path")
            elif color_by == "speed":
                coll = LineCollection(_segments(xy), cmap="viridis", norm=norm)
                coll.set_array(data.speeds()[:-1, d])
                coll.set_gid("path")
                ax.add_collection(coll)
                mappable = coll
            else:
                _add_lap_segments_2d(ax, data, d, xy)
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_aspect("equal")
    ax.autoscale_view()
    _finish_track_figure(fig, ax, track, color_by, mappable)
    return fig


def _add_lap_segments_2d(ax, data, drone, xy):
    laps = _lap_indices(data, drone)[:-1]
    cmap = plt.get_cmap("tab10")
    coll = LineCollection(_segments(xy), colors=[cmap(l % 10) for l in laps])
    coll.set_gid("path")
    ax.add_collection(coll)
    for lap in np.unique(laps):
        ax.plot([], [], color=cmap(lap % 10), label=f"lap {lap}")


def _track_3d(datas, color_by, labels):
    fig = plt.figure(figsize=(8, 7))
    ax = fig.add_subplot(projection="3d")
    track = datas[0].track
    radius = float(track["waypoint_radius"])
    theta = np.linspace(0.0, 2.0 * np.pi, 72)
    for k, wp in enumerate(track["waypoints"]):
        xs = wp[0] + radius * np.cos(theta)
        ys = wp[1] + radius * np.sin(theta)
        zs = np.full_like(xs, wp[2])
        disc, = ax.plot(xs, ys, zs, **_DISC_STYLE)
        disc.set_gid("waypoint_disc")
        ax.text(wp[0], wp[1], wp[2], str(k), fontsize=8, color="0.25")

    mappable = None
    if color_by == "speed":
        norm = _speed_norm(datas)
    for data, file_label in zip(datas, labels):
        for d in range(data.n_drones):
            p = data.positions[:, d]
            if color_by == "drone":
                line, = ax.plot(p[:, 0], p[:, 1], p[:, 2], linewidth=1.3,
                                label=_path_label(len(datas), file_label, d))
                line.set_gid("path")
            elif color_by == "speed":
                coll = Line3DCollection(_segments(p), cmap="viridis", norm=norm)
                coll.set_array(data.speeds()[:-1, d])
                coll.set_gid("path")
                ax.add_collection(coll)
                mappable = coll
            else:
                laps = _lap_indices(data, d)[:-1]
                cmap = plt.get_cmap("tab10")
                coll = Line3DCollection(_segments(p),
                                        colors=[cmap(l % 10) for l in laps])
                coll.set_gid("path")
                ax.add_collection(coll)
                for lap in np.unique(laps):
                    ax.plot([], [], [], color=cmap(lap % 10), label=f"lap {lap}")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_zlabel("z [m]")
    _finish_track_figure(fig, ax, track, color_by, mappable)
    return fig


def _finish_track_figure(fig, ax, track, color_by, mappable):
    ax.set_title(track.get("name", "track"))
    if color_by == "speed":
        if mappable is not None:
            fig.colorbar(mappable, ax=ax, label="speed [m/s]", shrink=0.8)
    else:
        handles, _ = ax.get_legend_handles_labels()
        if handles:
            ax.legend(loc="best", fontsize=8)
    fig.tight_layout()


def _speed_profile(datas, labels):
    fig, ax = plt.subplots(figsize=(9, 4.5))
    for data, file_label in zip(datas, labels):
        speeds = data.speeds()
        for d in range(data.n_drones):
            line, = ax.plot(data.times, speeds[:, d],
                            label=_path_label(len(datas), file_label, d))
            line.set_gid("speed")
            passed = (data.event_flags[:, d] & 1) != 0
            if passed.any():
                marks = ax.scatter(data.times[passed], speeds[passed, d],
                                   marker="x", s=18, color=line.get_color())
                marks.set_gid("waypoint_pass")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("speed [m/s]")
    ax.set_title("speed profile (x = waypoint passed)")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    return fig


_CURVE_PANELS = (
    ("mean_return", "mean episode return"),
    ("mean_length", "mean episode length"),
    ("mean_waypoints", "waypoints per episode"),
)


def plot_training(logs):
    """Training curves against per-drone steps; one series per log."""
    if not logs:
        raise ValueError("no metrics logs given")
    fig, axes = plt.subplots(2, 2, figsize=(11, 7), sharex=True)
    flat = axes.ravel()
    for ax, (column, title) in zip(flat, _CURVE_PANELS):
        for log in logs:
            line, = ax.plot(log["step_per_drone"], log[column], label=log.label)
            line.set_gid(f"curve:{column}")
        ax.set_title(title, fontsize=10)
        ax.grid(alpha=0.3)
    loss_ax = flat[3]
    for log in logs:
        a, = loss_ax.plot(log["step_per_drone"], log["actor_loss"],
                          label=f"{log.label} actor")
        a.set_gid("curve:actor_loss")
        c, = loss_ax.plot(log["step_per_drone"], log["critic_loss"],
                          linestyle="--", label=f"{log.label} critic")
        c.set_gid("curve:critic_loss")
    loss_ax.set_title("losses", fontsize=10)
    loss_ax.grid(alpha=0.3)
    for ax in flat[2:]:
        ax.set_xlabel("steps (per drone)")
    for ax in flat:
        ax.legend(fontsize=7)
    fig.tight_layout()
    return fig


def save(fig, out_path, dpi=130):
    fig.savefig(out_path, dpi=dpi)
    plt.close(fig)
