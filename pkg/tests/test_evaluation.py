import math

import numpy as np
import pytest

from swarmrace.env import EnvConfig
from swarmrace.errors import ConfigError, TrajectoryFormatError
from swarmrace.evaluation import (
    EvalSummary,
    PairContactTracker,
    TrialResult,
    evaluate,
    export_trajectory,
    format_summary,
    read_trial_records,
    run_trial,
    summarize,
    write_trial_records,
)
from swarmrace.nets import PolicyValueNet
from swarmrace.track import TrackSpec
from swarmrace.trajectory import (
    EVENT_WAYPOINT,
    Trajectory,
    column_names,
    parse_trajectory,
    write_trajectory,
)


def zero_policy(obs_len):
    """Net whose mean action is exactly zero everywhere."""
    net = PolicyValueNet.create(np.random.default_rng(0), obs_len, hidden=16)
    for arr in net.to_arrays().values():
        arr[:] = 0.0
    return net


def climb_track(**kw):
    """Two waypoints straight above the start; a zero-action policy climbs
    through both, so untrained nets complete real laps."""
    kw.setdefault("name", "climb")
    kw.setdefault("waypoints", [[0.0, 0.0, 2.0], [0.0, 0.0, 3.6]])
    kw.setdefault("waypoint_radius", 0.5)
    kw.setdefault("workspace_lo", [-5.0, -5.0, 0.0])
    kw.setdefault("workspace_hi", [5.0, 5.0, 40.0])
    kw.setdefault("laps", 1)
    kw.setdefault("waypoint_noise_sigma", 0.0)
    return TrackSpec(**kw)


def point_start_cfg(**kw):
    kw.setdefault("n_drones", 1)
    kw.setdefault("t_max", 400)
    kw.setdefault("init_box_lo", (0.0, 0.0, 0.5))
    kw.setdefault("init_box_hi", (0.0, 0.0, 0.5))
    return EnvConfig(**kw)


def climb_reference(z0, waypoint_zs, radius, laps, dt_control=0.01,
                    dt_phys=1e-3, t_max=400):
    """Vertical-flight mirror of the control stack, op-for-op.

    Returns (completion times of the final waypoint, steps flown). Valid only
    for zero actions from a point start on the z axis.
    """
    scale = 3.5 * 9.81
    cmd = (0.0 + 1.0) / 2.0 * scale
    frac = dt_phys / 0.05
    n_sub = round(dt_control / dt_phys)
    n_wp = len(waypoint_zs)
    thrust = 9.81
    vz = 0.0
    z = z0
    count = 0
    completions = []
    step = 0
    while step < t_max:
        for _ in range(n_sub):
            thrust = thrust + frac * (cmd - thrust)
            thrust = min(max(thrust, 0.0), scale)
            vz = vz + ((-9.81 + thrust) - 0.38 * vz) * dt_phys
            z = z + vz * dt_phys
        step += 1
        goal = waypoint_zs[count % n_wp]
        dist = np.linalg.norm(np.array([0.0, 0.0, z]) - np.array([0.0, 0.0, goal]))
        if dist < radius:
            count += 1
            if count % n_wp == 0:
                completions.append(step * dt_control)
        if count >= laps * n_wp:
            break
    return completions, step


class TestPairContactTracker:
    def test_one_event_per_contiguous_interval(self):
        tracker = PairContactTracker(0.2)
        started = [tracker.update(0, 1, d)
                   for d in (0.25, 0.15, 0.12, 0.15, 0.25, 0.3, 0.1, 0.1)]
        assert started == [False, True, False, False, False, False, True, False]
        assert tracker.events == 2

    def test_exactly_threshold_is_not_contact(self):
        tracker = PairContactTracker(0.2)
        assert not tracker.update(0, 1, 0.2)
        assert tracker.events == 0

    def test_pairs_are_unordered(self):
        tracker = PairContactTracker(0.2)
        tracker.update(3, 1, 0.1)
        assert not tracker.update(1, 3, 0.1)
        assert tracker.events == 1

    def test_independent_pairs_count_separately(self):
        tracker = PairContactTracker(0.2)
        tracker.update(0, 1, 0.1)
        tracker.update(0, 2, 0.1)
        tracker.update(1, 2, 0.5)
        assert tracker.events == 2

    def test_bad_threshold(self):
        with pytest.raises(ConfigError):
            PairContactTracker(0.0)


def fake_result(success=True, lap_times=None, collisions=0, seed=0):
    lap_times = lap_times if lap_times is not None else [[10.0]]
    return TrialResult(
        seed=seed, success=success, lap_times=lap_times,
        laps_completed=[len(x) for x in lap_times], collisions=collisions,
        min_pair_distance=math.inf, max_speed=1.0, max_body_rate=1.0,
    )


class TestSummarize:
    def test_success_rate_832_of_1000(self):
        results = [fake_result(success=(k < 832)) for k in range(1000)]
        summary = summarize(results, n_drones=1)
        assert summary.success_rate_pct == 83.2
        assert summary.n_trials == 1000

    def test_collision_rate_per_drone_per_trial(self):
        results = [fake_result(collisions=(1 if k < 4 else 0)) for k in range(1000)]
        summary = summarize(results, n_drones=2)
        assert summary.collision_rate_pct == 0.2

    def test_identical_lap_times_give_zero_std(self):
        results = [fake_result(lap_times=[[7.25]]) for _ in range(10)]
        summary = summarize(results, n_drones=1)
        assert summary.lap_time_mean == 7.25
        assert summary.lap_time_std == 0.0

    def test_failed_trials_excluded_from_lap_statistics(self):
        good = [fake_result(lap_times=[[5.0]]) for _ in range(3)]
        bad = [fake_result(success=False, lap_times=[[999.0]])]
        summary = summarize(good + bad, n_drones=1)
        assert summary.lap_time_mean == 5.0
        assert summary.success_rate_pct == 75.0

    def test_no_successes_gives_nan_lap_stats(self):
        summary = summarize([fake_result(success=False)], n_drones=1)
        assert math.isnan(summary.lap_time_mean)
        assert math.isnan(summary.lap_time_std)
        assert summary.success_rate_pct == 0.0

    def test_zero_trials_rejected(self):
        with pytest.raises(ConfigError):
            summarize([], n_drones=1)

    def test_format_summary_names_all_metrics(self):
        text = format_summary(summarize([fake_result()], n_drones=1))
        for needle in ("lap time", "collision rate", "success rate", "trials"):
            assert needle in text


class TestRunTrial:
    def test_zero_lap_target_is_immediate_success(self):
        net = zero_policy(18)
        result = run_trial(net, climb_track(), point_start_cfg(), seed=3,
                           lap_target=0)
        assert result.success
        assert result.lap_times == [[]]
        assert result.collisions == 0

    def test_lap_times_match_independent_integration(self):
        track = climb_track()
        cfg = point_start_cfg()
        result = run_trial(zero_policy(cfg.obs_length), track, cfg, seed=11)
        expected, _ = climb_reference(0.5, [2.0, 3.6], 0.5, laps=1)
        assert result.success
        assert result.laps_completed == [1]
        assert len(result.lap_times[0]) == 1
        assert result.lap_times[0][0] == expected[0]

    def test_multi_lap_times_are_deltas_between_completions(self):
        # Gates with overlapping radii let the climber pass one waypoint per
        # step, so three laps finish while it is still low. The reference
        # reports absolute completion times; lap times must be their deltas
        # with the first lap measured from the episode start.
        track = climb_track(
            name="overlap",
            waypoints=[[0.0, 0.0, 2.0], [0.0, 0.0, 2.4]],
            waypoint_radius=2.0,
            laps=3,
        )
        cfg = point_start_cfg()
        result = run_trial(zero_policy(cfg.obs_length), track, cfg, seed=1)
        completions, _ = climb_reference(0.5, [2.0, 2.4], 2.0, laps=3)
        assert len(completions) == 3
        expected = np.diff([0.0] + completions)
        assert result.success
        assert result.lap_times[0] == list(expected)

    def test_single_drone_never_collides(self):
        cfg = point_start_cfg(t_max=50)
        result = run_trial(zero_policy(cfg.obs_length), climb_track(), cfg, seed=5)
        assert result.collisions == 0
        assert result.min_pair_distance == math.inf

    def test_fixed_seed_is_reproducible(self):
        track = climb_track(waypoint_noise_sigma=0.1)
        cfg = point_start_cfg(n_drones=2, t_max=40,
                              init_box_lo=(-1.0, -1.0, 0.5),
                              init_box_hi=(1.0, 1.0, 1.5))
        net = zero_policy(cfg.obs_length)
        a = run_trial(net, track, cfg, seed=21)
        b = run_trial(net, track, cfg, seed=21)
        assert a.success == b.success
        assert a.lap_times == b.lap_times
        assert a.collisions == b.collisions
        assert a.min_pair_distance == b.min_pair_distance
        assert a.max_speed == b.max_speed
        assert a.max_body_rate == b.max_body_rate

    def test_observation_length_mismatch_is_descriptive(self):
        cfg = point_start_cfg(n_drones=2, init_box_lo=(-1.0, -1.0, 0.5),
                              init_box_hi=(1.0, 1.0, 1.5))
        with pytest.raises(ConfigError, match="observation length 18"):
            run_trial(zero_policy(18), climb_track(), cfg, seed=0)

    def test_speed_and_laps_invariants(self):
        cfg = point_start_cfg()
        result = run_trial(zero_policy(cfg.obs_length), climb_track(), cfg, seed=2)
        assert result.max_speed > 0.0
        assert result.max_body_rate >= 0.0
        assert all(t > 0 for drone in result.lap_times for t in drone)
        if result.success:
            assert all(d >= climb_track().laps for d in result.laps_completed)

    def test_timeout_without_laps_is_failure(self):
        track = climb_track(waypoints=[[4.0, 4.0, 30.0], [4.0, -4.0, 30.0]])
        cfg = point_start_cfg(t_max=20)
        result = run_trial(zero_policy(cfg.obs_length), track, cfg, seed=9)
        assert not result.success
        assert result.lap_times == [[]]


class TestEvaluate:
    def test_summary_consistent_with_trial_list(self):
        cfg = point_start_cfg(t_max=250)
        summary, results = evaluate(zero_policy(cfg.obs_length), climb_track(),
                                    cfg, n_trials=5, base_seed=100)
        assert summary.n_trials == 5
        again = summarize(results, cfg.n_drones)
        assert summary == again
        assert [r.seed for r in results] == list(range(100, 105))

    def test_invalid_trial_count(self):
        cfg = point_start_cfg()
        with pytest.raises(ConfigError):
            evaluate(zero_policy(cfg.obs_length), climb_track(), cfg,
                     n_trials=0, base_seed=0)

    def test_worker_pool_matches_serial(self):
        cfg = point_start_cfg(t_max=120)
        net = zero_policy(cfg.obs_length)
        serial, s_results = evaluate(net, climb_track(), cfg, 4, 7, workers=1)
        pooled, p_results = evaluate(net, climb_track(), cfg, 4, 7, workers=2)
        assert serial == pooled
        for a, b in zip(s_results, p_results):
            assert (a.seed, a.success, a.lap_times) == (b.seed, b.success, b.lap_times)

    def test_record_trajectories_first_k(self):
        cfg = point_start_cfg(t_max=60)
        _, results = evaluate(zero_policy(cfg.obs_length), climb_track(), cfg,
                              3, 0, record_trajectories=2)
        assert results[0].trajectory is not None
        assert results[1].trajectory is not None
        assert results[2].trajectory is None


class TestTrialRecords:
    def test_round_trip_preserves_summary_exactly(self, tmp_path):
        rng = np.random.default_rng(6)
        results = []
        for k in range(60):
            success = bool(rng.random() < 0.8)
            laps = [list(rng.uniform(4.0, 9.0, size=3))] if success else [[]]
            results.append(TrialResult(
                seed=k, success=success, lap_times=laps,
                laps_completed=[3 if success else 0],
                collisions=int(rng.integers(0, 3)),
                min_pair_distance=float(rng.uniform(0.05, 2.0)),
                max_speed=float(rng.uniform(1.0, 20.0)),
                max_body_rate=float(rng.uniform(0.1, 10.0)),
            ))
        path = tmp_path / "trials.csv"
        write_trial_records(path, results)
        loaded = read_trial_records(path)
        assert summarize(loaded, 1) == summarize(results, 1)
        for a, b in zip(results, loaded):
            assert a.lap_times == b.lap_times
            assert a.min_pair_distance == b.min_pair_distance

    def test_reader_rejects_other_files(self, tmp_path):
        path = tmp_path / "junk.csv"
        path.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(ConfigError, match="trial-record"):
            read_trial_records(path)


def synthetic_trajectory(n_steps=40, n_drones=2, seed=8):
    rng = np.random.default_rng(seed)
    track = climb_track(name="synthetic")
    return Trajectory(
        track=track, dt=0.01, seed=seed,
        times=np.arange(1, n_steps + 1) * 0.01,
        positions=rng.normal(size=(n_steps, n_drones, 3)),
        velocities=rng.normal(size=(n_steps, n_drones, 3)),
        quats=rng.normal(size=(n_steps, n_drones, 4)),
        thrusts=rng.uniform(0.0, 34.0, size=(n_steps, n_drones)),
        body_rates=rng.normal(size=(n_steps, n_drones, 3)),
        waypoint_counts=rng.integers(0, 9, size=(n_steps, n_drones)),
        event_flags=rng.integers(0, 8, size=(n_steps, n_drones)),
    )


class TestTrajectoryFormat:
    def test_round_trip_is_bit_exact(self, tmp_path):
        traj = synthetic_trajectory()
        path = tmp_path / "run.traj"
        write_trajectory(path, traj)
        back = parse_trajectory(path)
        assert np.array_equal(back.positions, traj.positions)
        assert np.array_equal(back.velocities, traj.velocities)
        assert np.array_equal(back.quats, traj.quats)
        assert np.array_equal(back.thrusts, traj.thrusts)
        assert np.array_equal(back.body_rates, traj.body_rates)
        assert np.array_equal(back.waypoint_counts, traj.waypoint_counts)
        assert np.array_equal(back.event_flags, traj.event_flags)
        assert np.array_equal(back.times, traj.times)
        assert back.dt == traj.dt
        assert back.seed == traj.seed
        assert back.track.name == "synthetic"
        assert np.array_equal(back.track.waypoints, traj.track.waypoints)

    def test_fifteen_second_run_is_1500_rows(self, tmp_path):
        traj = synthetic_trajectory(n_steps=1500, n_drones=1)
        path = tmp_path / "long.traj"
        write_trajectory(path, traj)
        rows = [l for l in path.read_text().splitlines() if not l.startswith("#")]
        assert len(rows) == 1500
        assert parse_trajectory(path).n_steps == 1500

    def test_column_layout_doc(self):
        names = column_names(2)
        assert names[0] == "time"
        assert names[1] == "d0_px"
        assert names[-1] == "d1_events"
        assert len(names) == 1 + 32

    def test_missing_format_tag(self, tmp_path):
        path = tmp_path / "bad.traj"
        path.write_text("just text\n")
        with pytest.raises(TrajectoryFormatError, match="line 1"):
            parse_trajectory(path)

    def test_wrong_column_count_names_line(self, tmp_path):
        traj = synthetic_trajectory(n_steps=5, n_drones=1)
        path = tmp_path / "bad.traj"
        write_trajectory(path, traj)
        lines = path.read_text().splitlines()
        n_header = sum(1 for l in lines if l.startswith("#"))
        bad_line_no = n_header + 3
        lines[bad_line_no - 1] += " 1.0"
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(TrajectoryFormatError, match=f"line {bad_line_no}"):
            parse_trajectory(path)

    def test_non_numeric_value_names_line(self, tmp_path):
        traj = synthetic_trajectory(n_steps=3, n_drones=1)
        path = tmp_path / "bad.traj"
        write_trajectory(path, traj)
        lines = path.read_text().splitlines()
        n_header = sum(1 for l in lines if l.startswith("#"))
        parts = lines[n_header].split()
        parts[2] = "oops"
        lines[n_header] = " ".join(parts)
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(TrajectoryFormatError, match=f"line {n_header + 1}"):
            parse_trajectory(path)

    def test_malformed_header_value(self, tmp_path):
        traj = synthetic_trajectory(n_steps=2, n_drones=1)
        path = tmp_path / "bad.traj"
        write_trajectory(path, traj)
        text = path.read_text().replace("# n_drones: 1", "# n_drones: one")
        path.write_text(text)
        with pytest.raises(TrajectoryFormatError, match="line 3"):
            parse_trajectory(path)

    def test_missing_header_key(self, tmp_path):
        traj = synthetic_trajectory(n_steps=2, n_drones=1)
        path = tmp_path / "bad.traj"
        write_trajectory(path, traj)
        lines = [l for l in path.read_text().splitlines()
                 if not l.startswith("# dt:")]
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(TrajectoryFormatError, match="'dt'"):
            parse_trajectory(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.traj"
        path.write_text("")
        with pytest.raises(TrajectoryFormatError, match="empty"):
            parse_trajectory(path)

    def test_export_from_trial_and_reparse(self, tmp_path):
        cfg = point_start_cfg(t_max=60)
        result = run_trial(zero_policy(cfg.obs_length), climb_track(), cfg,
                           seed=4, record_trajectory=True)
        path = tmp_path / "trial.traj"
        export_trajectory(result, path)
        back = parse_trajectory(path)
        assert np.array_equal(back.positions, result.trajectory.positions)
        assert back.n_drones == 1
        assert np.any(back.event_flags & EVENT_WAYPOINT)

    def test_export_without_recording_rejected(self, tmp_path):
        cfg = point_start_cfg(t_max=10)
        result = run_trial(zero_policy(cfg.obs_length), climb_track(), cfg, seed=4)
        with pytest.raises(ConfigError, match="no recorded trajectory"):
            export_trajectory(result, tmp_path / "x.traj")
