"""Batch evaluation of trained policies.

Trials run the policy mean (no sampling) on a track whose waypoints are
perturbed per-trial by the track's Gaussian noise setting, and report lap
times, collision events, and success. A lap completes when a drone passes the
track's final waypoint; lap k is timed from the previous completion (the
episode start for the first lap). A collision event is one contiguous
interval during which a pair of live drones stays below twice the safety
radius; re-entering after separating counts again.

Aggregation over trials: success rate is the percentage of trials where every
drone finished the lap target; collision rate is mean events per drone per
trial, as a percentage; lap-time statistics pool the lap times of successful
trials only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from multiprocessing import get_context
from pathlib import Path

import numpy as np

from .checkpoint import Checkpoint
from .env import EnvConfig, RaceEnv
from .errors import ConfigError
from .nets import PolicyValueNet
from .rewards import RewardParams
from .track import TrackSpec
from .trajectory import (
    EVENT_BOUNDARY,
    EVENT_CONTACT,
    EVENT_WAYPOINT,
    Trajectory,
    write_trajectory,
)


@dataclass
class TrialResult:
    seed: int
    success: bool
    lap_times: list
    laps_completed: list
    collisions: int
    min_pair_distance: float
    max_speed: float
    max_body_rate: float
    trajectory: Trajectory | None = None

    def __post_init__(self):
        if self.collisions < 0:
            raise ConfigError("collision count cannot be negative")


@dataclass
class EvalSummary:
    lap_time_mean: float
    lap_time_std: float
    collision_rate_pct: float
    success_rate_pct: float
    n_trials: int

    def __post_init__(self):
        if not 0.0 <= self.success_rate_pct <= 100.0:
            raise ConfigError("success rate must be a percentage")
        if self.collision_rate_pct < 0.0:
            raise ConfigError("collision rate cannot be negative")


class PairContactTracker:
    """Counts one event per pair per contiguous below-threshold interval."""

    def __init__(self, threshold: float):
        if threshold <= 0.0:
            raise ConfigError("contact threshold must be positive")
        self.threshold = threshold
        self.events = 0
        self._inside = {}

    def update(self, i: int, j: int, dist: float) -> bool:
        """Feed one distance sample; returns True when a new event starts."""
        key = (min(i, j), max(i, j))
        if dist < self.threshold:
            if not self._inside.get(key, False):
                self._inside[key] = True
                self.events += 1
                return True
            return False
        self._inside[key] = False
        return False


def _resolve_net(policy) -> PolicyValueNet:
    if isinstance(policy, Checkpoint):
        return policy.net
    if isinstance(policy, PolicyValueNet):
        return policy
    raise ConfigError(f"expected a checkpoint or a policy net, got {type(policy).__name__}")


def run_trial(policy, track: TrackSpec, env_cfg: EnvConfig, seed: int,
              lap_target: int | None = None,
              reward_params: RewardParams | None = None,
              record_trajectory: bool = False) -> TrialResult:
    """One deterministic evaluation episode."""
    net = _resolve_net(policy)
    if net.obs_len != env_cfg.obs_length:
        raise ConfigError(
            f"policy expects observation length {net.obs_len} but the config "
            f"(drones={env_cfg.n_drones}, lookahead={env_cfg.lookahead}) "
            f"produces {env_cfg.obs_length}"
        )
    if lap_target is None:
        lap_target = track.laps
    if lap_target < 0:
        raise ConfigError("lap target cannot be negative")

    n = env_cfg.n_drones
    if lap_target == 0:
        return TrialResult(
            seed=seed, success=True, lap_times=[[] for _ in range(n)],
            laps_completed=[0] * n, collisions=0,
            min_pair_distance=math.inf, max_speed=0.0, max_body_rate=0.0,
        )

    env = RaceEnv(replace(track, laps=lap_target), env_cfg,
                  reward_params=reward_params)
    obs = env.reset(seed)
    n_wp = track.n_waypoints
    contact = 2.0 * env.reward_params.safe_radius
    dt = env_cfg.dt_control

    lap_times = [[] for _ in range(n)]
    laps_done = [0] * n
    last_completion = [0.0] * n
    tracker = PairContactTracker(contact)
    min_pair = math.inf
    max_speed = 0.0
    max_rate = 0.0

    rec = None
    if record_trajectory:
        rec = {"times": [], "positions": [], "velocities": [], "quats": [],
               "thrusts": [], "body_rates": [], "waypoints": [], "events": []}

    while True:
        mean, _ = net.actor_forward(obs)
        outcome = env.step(mean)
        state = env.state
        now = state.step_count * dt

        for i in range(n):
            while state.waypoint_counts[i] >= (laps_done[i] + 1) * n_wp:
                lap_times[i].append(now - last_completion[i])
                last_completion[i] = now
                laps_done[i] += 1

        flags = np.zeros(n, dtype=int)
        live = np.flatnonzero(state.active)
        for a in range(len(live)):
            for b in range(a + 1, len(live)):
                i, j = int(live[a]), int(live[b])
                dist = float(np.linalg.norm(state.positions[i] - state.positions[j]))
                min_pair = min(min_pair, dist)
                tracker.update(i, j, dist)
                if dist < contact:
                    flags[i] |= EVENT_CONTACT
                    flags[j] |= EVENT_CONTACT
        for i in live:
            max_speed = max(max_speed, float(np.linalg.norm(state.velocities[i])))
            max_rate = max(max_rate, float(np.linalg.norm(state.body_rates[i])))
        for i in range(n):
            if outcome.events[i].waypoint_passed:
                flags[i] |= EVENT_WAYPOINT
            if outcome.events[i].boundary_violation:
                flags[i] |= EVENT_BOUNDARY

        if rec is not None:
            rec["times"].append(now)
            rec["positions"].append(state.positions.copy())
            rec["velocities"].append(state.velocities.copy())
            rec["quats"].append(state.quats.copy())
            rec["thrusts"].append(state.thrusts.copy())
            rec["body_rates"].append(state.body_rates.copy())
            rec["waypoints"].append(state.waypoint_counts.copy())
            rec["events"].append(flags)

        obs = outcome.obs
        if outcome.episode_over:
            break

    trajectory = None
    if rec is not None:
        trajectory = Trajectory(
            track=track, dt=dt, seed=seed,
            times=np.array(rec["times"]),
            positions=np.stack(rec["positions"]),
            velocities=np.stack(rec["velocities"]),
            quats=np.stack(rec["quats"]),
            thrusts=np.stack(rec["thrusts"]),
            body_rates=np.stack(rec["body_rates"]),
            waypoint_counts=np.stack(rec["waypoints"]),
            event_flags=np.stack(rec["events"]),
        )
    return TrialResult(
        seed=seed,
        success=all(d >= lap_target for d in laps_done),
        lap_times=lap_times,
        laps_completed=laps_done,
        collisions=tracker.events,
        min_pair_distance=min_pair,
        max_speed=max_speed,
        max_body_rate=max_rate,
        trajectory=trajectory,
    )


def summarize(results, n_drones: int) -> EvalSummary:
    """Aggregate per-trial results following the documented definitions."""
    results = list(results)
    if not results:
        raise ConfigError("cannot summarize zero trials")
    successes = [r for r in results if r.success]
    pool = [t for r in successes for per_drone in r.lap_times for t in per_drone]
    if pool:
        arr = np.asarray(pool)
        mean = float(arr.mean())
        std = float(arr.std())
    else:
        mean = math.nan
        std = math.nan
    total_collisions = sum(r.collisions for r in results)
    return EvalSummary(
        lap_time_mean=mean,
        lap_time_std=std,
        collision_rate_pct=100.0 * total_collisions / (n_drones * len(results)),
        success_rate_pct=100.0 * len(successes) / len(results),
        n_trials=len(results),
    )


def _trial_task(args):
    policy, track, env_cfg, seed, lap_target, reward_params, record = args
    return run_trial(policy, track, env_cfg, seed, lap_target=lap_target,
                     reward_params=reward_params, record_trajectory=record)


def evaluate(policy, track: TrackSpec, env_cfg: EnvConfig, n_trials: int,
             base_seed: int, lap_target: int | None = None,
             reward_params: RewardParams | None = None,
             record_trajectories: int = 0,
             workers: int = 1) -> tuple[EvalSummary, list]:
    """Run independent trials with seeds base_seed..base_seed+n_trials-1."""
    if n_trials < 1:
        raise ConfigError("n_trials must be >= 1")
    if workers < 1:
        raise ConfigError("workers must be >= 1")
    tasks = [
        (policy, track, env_cfg, base_seed + k, lap_target, reward_params,
         k < record_trajectories)
        for k in range(n_trials)
    ]
    if workers == 1:
        results = [_trial_task(t) for t in tasks]
    else:
        with get_context("spawn").Pool(workers) as pool:
            results = pool.map(_trial_task, tasks)
    return summarize(results, env_cfg.n_drones), results


def export_trajectory(result, path) -> None:
    """Write the recorded trajectory of a trial to a file."""
    traj = result.trajectory if isinstance(result, TrialResult) else result
    if not isinstance(traj, Trajectory):
        raise ConfigError("trial has no recorded trajectory to export")
    write_trajectory(path, traj)


RECORD_COLUMNS = ["trial", "seed", "success", "collisions", "laps_completed",
                  "min_pair_distance", "max_speed", "max_body_rate", "lap_times"]


def _encode_lap_times(lap_times) -> str:
    per_drone = [";".join(repr(float(t)) for t in drone) for drone in lap_times]
    return "|".join(per_drone)


def _decode_lap_times(text: str) -> list:
    out = []
    for chunk in text.split("|"):
        out.append([float(t) for t in chunk.split(";") if t])
    return out


def write_trial_records(path, results) -> None:
    """Per-trial records as delimited text; lap times keep full precision."""
    lines = [",".join(RECORD_COLUMNS)]
    for k, r in enumerate(results):
        lines.append(",".join([
            str(k), str(r.seed), str(int(r.success)), str(r.collisions),
            ";".join(str(d) for d in r.laps_completed),
            repr(float(r.min_pair_distance)),
            repr(float(r.max_speed)),
            repr(float(r.max_body_rate)),
            _encode_lap_times(r.lap_times),
        ]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_trial_records(path) -> list:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].split(",") != RECORD_COLUMNS:
        raise ConfigError(f"{path} is not a trial-record file")
    results = []
    for line in lines[1:]:
        if not line.strip():
            continue
        parts = line.split(",")
        results.append(TrialResult(
            seed=int(parts[1]),
            success=bool(int(parts[2])),
            lap_times=_decode_lap_times(parts[8]),
            laps_completed=[int(d) for d in parts[4].split(";") if d],
            collisions=int(parts[3]),
            min_pair_distance=float(parts[5]),
            max_speed=float(parts[6]),
            max_body_rate=float(parts[7]),
        ))
    return results


def format_summary(summary: EvalSummary) -> str:
    """Human-readable structured summary block."""
    lap = "n/a"
    if not math.isnan(summary.lap_time_mean):
        lap = f"{summary.lap_time_mean!r} +/- {summary.lap_time_std!r}"
    return "\n".join([
        f"trials: {summary.n_trials}",
        f"lap time (s, successful trials only): {lap}",
        f"collision rate (% per drone per trial): {summary.collision_rate_pct!r}",
        f"success rate (%): {summary.success_rate_pct!r}",
    ]) + "\n"
