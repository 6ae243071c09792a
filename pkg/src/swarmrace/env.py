"""Multi-drone waypoint racing environment.

Each drone observes only local quantities: relative positions of the next few
waypoints, its own velocity and attitude, and relative state of the other
drones. Actions are normalized 4-vectors (collective thrust plus body rates).
Leaving the workspace terminates that drone: it freezes in place, its later
transitions are flagged invalid (mask 0), and the episode continues until the
step limit, until every drone is gone, or until every drone has finished the
required laps.

Randomness is confined to reset: spawn positions and per-episode waypoint
perturbations come from a counter-based generator seeded from (seed, env id,
episode index), so a seeded run is exactly repeatable.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import STANDARD_GRAVITY, ActuatorCommand, DynamicsParams, rotation_from_quat, step_batch
from .errors import ConfigError, InvalidStateError
from .rewards import RewardBreakdown, RewardParams, total_reward
from .track import TrackSpec

EGO_SIZE = 12
NEIGHBOR_SIZE = 7
INIT_ATTEMPTS = 100


def _as_positive_vec3(value, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape != (3,):
        raise ConfigError(f"{name} must be a 3-vector")
    if np.any(arr <= 0.0):
        raise ConfigError(f"{name} components must be > 0")
    return arr


@dataclass
class EnvConfig:
    """Environment shape and normalization constants."""

    n_drones: int = 1
    lookahead: int = 2
    safe_radius: float = 0.10
    safety_tolerance: float = 0.10
    thrust_to_weight: float = 3.5
    max_body_rate: np.ndarray = field(default_factory=lambda: np.array([10.0, 10.0, 0.3]))
    waypoint_scale: np.ndarray = field(default_factory=lambda: np.array([16.0, 16.0, 3.0]))
    velocity_scale: np.ndarray = field(default_factory=lambda: np.array([15.0, 15.0, 5.0]))
    neighbor_pos_scale: np.ndarray = field(default_factory=lambda: np.array([8.0, 8.0, 3.0]))
    neighbor_vel_scale: np.ndarray = field(default_factory=lambda: np.array([15.0, 15.0, 5.0]))
    neighbor_dist_scale: float = 4.0
    t_max: int = 1500
    dt_control: float = 0.01
    init_box_lo: np.ndarray = field(default_factory=lambda: np.array([-1.5, -1.5, 0.5]))
    init_box_hi: np.ndarray = field(default_factory=lambda: np.array([1.5, 1.5, 3.5]))

    def __post_init__(self):
        if self.n_drones < 1:
            raise ConfigError(f"n_drones must be >= 1, got {self.n_drones}")
        if self.lookahead < 1:
            raise ConfigError(f"lookahead must be >= 1, got {self.lookahead}")
        if self.safe_radius <= 0.0:
            raise ConfigError("safe_radius must be > 0")
        if self.safety_tolerance < 0.0:
            raise ConfigError("safety_tolerance must be >= 0")
        if self.thrust_to_weight <= 0.0:
            raise ConfigError("thrust_to_weight must be > 0")
        self.max_body_rate = _as_positive_vec3(self.max_body_rate, "max_body_rate")
        self.waypoint_scale = _as_positive_vec3(self.waypoint_scale, "waypoint_scale")
        self.velocity_scale = _as_positive_vec3(self.velocity_scale, "velocity_scale")
        self.neighbor_pos_scale = _as_positive_vec3(self.neighbor_pos_scale, "neighbor_pos_scale")
        self.neighbor_vel_scale = _as_positive_vec3(self.neighbor_vel_scale, "neighbor_vel_scale")
        if self.neighbor_dist_scale <= 0.0:
            raise ConfigError("neighbor_dist_scale must be > 0")
        if self.t_max < 1:
            raise ConfigError("t_max must be >= 1")
        if self.dt_control <= 0.0:
            raise ConfigError("dt_control must be > 0")
        self.init_box_lo = np.asarray(self.init_box_lo, dtype=float)
        self.init_box_hi = np.asarray(self.init_box_hi, dtype=float)
        if self.init_box_lo.shape != (3,) or self.init_box_hi.shape != (3,):
            raise ConfigError("init box corners must be 3-vectors")
        if np.any(self.init_box_lo > self.init_box_hi):
            raise ConfigError("init box min corner must not exceed max corner")

    @property
    def obs_length(self) -> int:
        return 3 * self.lookahead + EGO_SIZE + NEIGHBOR_SIZE * (self.n_drones - 1)

    @property
    def wp_slice(self) -> slice:
        return slice(0, 3 * self.lookahead)

    @property
    def ego_slice(self) -> slice:
        start = 3 * self.lookahead
        return slice(start, start + EGO_SIZE)

    @property
    def neigh_slice(self) -> slice:
        start = 3 * self.lookahead + EGO_SIZE
        return slice(start, self.obs_length)

    def normalizer(self) -> np.ndarray:
        """Componentwise divisors turning a raw observation into a normalized one."""
        parts = [np.tile(self.waypoint_scale, self.lookahead), self.velocity_scale, np.ones(9)]
        neigh = np.concatenate([self.neighbor_pos_scale, self.neighbor_vel_scale, [self.neighbor_dist_scale]])
        parts.extend([neigh] * (self.n_drones - 1))
        return np.concatenate(parts)


@dataclass
class EnvState:
    """Snapshot of the global simulation state (shared across all drones)."""

    positions: np.ndarray
    velocities: np.ndarray
    quats: np.ndarray
    thrusts: np.ndarray
    body_rates: np.ndarray
    waypoint_counts: np.ndarray
    active: np.ndarray
    waypoints: np.ndarray
    step_count: int


@dataclass
class DroneEvents:
    """Per-drone bookkeeping for one step."""

    waypoint_passed: bool = False
    proximity_partners: tuple = ()
    collision_partners: tuple = ()
    boundary_violation: bool = False


@dataclass
class StepOutcome:
    obs: np.ndarray
    rewards: np.ndarray
    masks: np.ndarray
    terminated: np.ndarray
    episode_over: bool
    events: list
    breakdowns: list


def build_observation(i: int, state: EnvState, cfg: EnvConfig) -> np.ndarray:
    """Raw (unnormalized) observation vector for drone i."""
    n_wp = state.waypoints.shape[0]
    parts = []
    goal = state.waypoints[state.waypoint_counts[i] % n_wp]
    parts.append(goal - state.positions[i])
    for k in range(1, cfg.lookahead):
        a = state.waypoints[(state.waypoint_counts[i] + k - 1) % n_wp]
        b = state.waypoints[(state.waypoint_counts[i] + k) % n_wp]
        parts.append(b - a)
    parts.append(state.velocities[i])
    parts.append(rotation_from_quat(state.quats[i]).reshape(9))
    for j in range(cfg.n_drones):
        if j == i:
            continue
        dp = state.positions[j] - state.positions[i]
        dv = state.velocities[j] - state.velocities[i]
        parts.append(dp)
        parts.append(dv)
        parts.append([np.linalg.norm(dp)])
    return np.concatenate(parts)


def normalize_observation(raw: np.ndarray, cfg: EnvConfig) -> np.ndarray:
    raw = np.asarray(raw, dtype=float)
    if raw.shape[-1] != cfg.obs_length:
        raise ConfigError(f"observation length {raw.shape[-1]} does not match config ({cfg.obs_length})")
    return raw / cfg.normalizer()


def denormalize_action(action, cfg: EnvConfig, gravity_norm: float = STANDARD_GRAVITY) -> ActuatorCommand:
    """Map a normalized 4-vector (clipped to [-1,1]) to an actuator command."""
    a = np.clip(np.asarray(action, dtype=float), -1.0, 1.0)
    if a.shape != (4,):
        raise ConfigError(f"action must be a 4-vector, got shape {a.shape}")
    thrust = (a[0] + 1.0) / 2.0 * cfg.thrust_to_weight * gravity_norm
    return ActuatorCommand(thrust=thrust, body_rate=a[1:] * cfg.max_body_rate)


class RaceEnv:
    """One environment instance holding n_drones vehicles on a track."""

    def __init__(self, track: TrackSpec, cfg: EnvConfig, reward_params: RewardParams | None = None,
                 dynamics: DynamicsParams | None = None, env_id: int = 0):
        self.track = track
        self.cfg = cfg
        self.dynamics = dynamics or DynamicsParams(
            thrust_ceiling=cfg.thrust_to_weight * STANDARD_GRAVITY
        )
        self.reward_params = replace(
            reward_params or RewardParams(),
            safe_radius=cfg.safe_radius,
            safety_tolerance=cfg.safety_tolerance,
            waypoint_radius=track.waypoint_radius,
        )
        self.env_id = int(env_id)
        self._thrust_scale = cfg.thrust_to_weight * self.dynamics.gravity_norm
        self._norm_div = cfg.normalizer()
        self._base_seed = None
        self._episode_index = 0
        self.state: EnvState | None = None
        self._prev_action = None
        self._episode_over = True

    @property
    def n_drones(self) -> int:
        return self.cfg.n_drones

    @property
    def lap_goal(self) -> int:
        return self.track.laps * self.track.n_waypoints

    def finished(self) -> np.ndarray:
        return self.state.waypoint_counts >= self.lap_goal

    def reset(self, seed: int | None = None) -> np.ndarray:
        """Start a new episode; returns normalized observations (n_drones, obs_length)."""
        if seed is not None:
            self._base_seed = int(seed)
            self._episode_index = 0
        elif self._base_seed is None:
            raise ConfigError("first reset needs an explicit seed")
        else:
            self._episode_index += 1
        seq = np.random.SeedSequence((self._base_seed, self.env_id, self._episode_index))
        rng = np.random.Generator(np.random.Philox(seq))

        sigma = self.track.waypoint_noise_sigma
        waypoints = self.track.waypoints.copy()
        if sigma > 0.0:
            waypoints += rng.normal(0.0, sigma, size=waypoints.shape)

        n = self.cfg.n_drones
        min_dist = 2.0 * self.cfg.safe_radius + self.cfg.safety_tolerance
        for attempt in range(INIT_ATTEMPTS):
            positions = rng.uniform(self.cfg.init_box_lo, self.cfg.init_box_hi, size=(n, 3))
            if n == 1:
                break
            deltas = positions[:, None, :] - positions[None, :, :]
            dists = np.linalg.norm(deltas, axis=-1)
            dists[np.diag_indices(n)] = np.inf
            if dists.min() >= min_dist:
                break
        else:
            raise ConfigError(
                f"could not place {n} drones at pairwise distance {min_dist} in the init box "
                f"after {INIT_ATTEMPTS} attempts; enlarge the box"
            )

        quats = np.zeros((n, 4))
        quats[:, 0] = 1.0
        self.state = EnvState(
            positions=positions,
            velocities=np.zeros((n, 3)),
            quats=quats,
            thrusts=np.full(n, self.dynamics.gravity_norm),
            body_rates=np.zeros((n, 3)),
            waypoint_counts=np.zeros(n, dtype=int),
            active=np.ones(n, dtype=bool),
            waypoints=waypoints,
            step_count=0,
        )
        self._prev_action = None
        self._episode_over = False
        return self._observations()

    def _observations(self) -> np.ndarray:
        obs = np.empty((self.cfg.n_drones, self.cfg.obs_length))
        for i in range(self.cfg.n_drones):
            obs[i] = build_observation(i, self.state, self.cfg)
        return obs / self._norm_div

    def _prepare(self, actions) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        if self._episode_over or self.state is None:
            raise InvalidStateError("episode is over; call reset before stepping")
        actions = np.asarray(actions, dtype=float)
        if actions.shape != (self.cfg.n_drones, 4):
            raise ConfigError(f"actions must have shape ({self.cfg.n_drones}, 4), got {actions.shape}")
        clipped = np.clip(actions, -1.0, 1.0)
        active_idx = np.flatnonzero(self.state.active)
        cmd_thrust = (clipped[active_idx, 0] + 1.0) / 2.0 * self._thrust_scale
        cmd_rate = clipped[active_idx, 1:] * self.cfg.max_body_rate
        return clipped, active_idx, cmd_thrust, cmd_rate

    def _finish(self, clipped, active_idx, new_p, new_v, new_q, new_t, new_w) -> StepOutcome:
        state = self.state
        cfg = self.cfg
        params = self.reward_params
        n = cfg.n_drones
        n_wp = state.waypoints.shape[0]

        active_at_start = state.active.copy()
        prev_positions = state.positions.copy()
        state.positions[active_idx] = new_p
        state.velocities[active_idx] = new_v
        state.quats[active_idx] = new_q
        state.thrusts[active_idx] = new_t
        state.body_rates[active_idx] = new_w

        goals = np.empty((n, 3))
        passed = np.zeros(n, dtype=bool)
        for i in range(n):
            goals[i] = state.waypoints[state.waypoint_counts[i] % n_wp]
        for i in active_idx:
            if np.linalg.norm(state.positions[i] - goals[i]) < params.waypoint_radius:
                passed[i] = True
                state.waypoint_counts[i] += 1

        outside = (
            np.any(state.positions < self.track.workspace_lo, axis=1)
            | np.any(state.positions > self.track.workspace_hi, axis=1)
        )
        newly_dead = outside & active_at_start

        prev_action = clipped if self._prev_action is None else self._prev_action
        rewards = np.zeros(n)
        breakdowns: list = [None] * n
        for i in active_idx:
            bd = total_reward(
                i, prev_positions[i], goals[i], bool(passed[i]),
                state.body_rates[i], prev_action[i], clipped[i],
                state.positions, state.velocities,
                self.track.workspace_lo, self.track.workspace_hi,
                params, active=active_at_start,
            )
            breakdowns[i] = bd
            rewards[i] = bd.total

        proximity_pairs = []
        collision_pairs = []
        if n > 1:
            contact = 2.0 * params.safe_radius
            threshold = contact + params.safety_tolerance
            live = np.flatnonzero(active_at_start)
            for a_pos in range(len(live)):
                for b_pos in range(a_pos + 1, len(live)):
                    i, j = int(live[a_pos]), int(live[b_pos])
                    dist = np.linalg.norm(state.positions[i] - state.positions[j])
                    if dist <= threshold:
                        proximity_pairs.append((i, j))
                    if dist <= contact:
                        collision_pairs.append((i, j))

        state.active &= ~newly_dead
        state.step_count += 1
        finished = state.waypoint_counts >= self.lap_goal
        episode_over = (
            state.step_count >= cfg.t_max or not state.active.any() or bool(finished.all())
        )

        masks = active_at_start.astype(float)
        terminated = (~active_at_start | newly_dead).astype(float)
        if episode_over:
            terminated[:] = 1.0

        events = []
        for i in range(n):
            events.append(DroneEvents(
                waypoint_passed=bool(passed[i]),
                proximity_partners=tuple(j for (a, j) in proximity_pairs if a == i)
                + tuple(a for (a, j) in proximity_pairs if j == i),
                collision_partners=tuple(j for (a, j) in collision_pairs if a == i)
                + tuple(a for (a, j) in collision_pairs if j == i),
                boundary_violation=bool(newly_dead[i]),
            ))

        self._prev_action = clipped
        self._episode_over = episode_over
        return StepOutcome(
            obs=self._observations(),
            rewards=rewards,
            masks=masks,
            terminated=terminated,
            episode_over=episode_over,
            events=events,
            breakdowns=breakdowns,
        )

    def step(self, actions) -> StepOutcome:
        clipped, active_idx, cmd_thrust, cmd_rate = self._prepare(actions)
        state = self.state
        new_p, new_v, new_q, new_t, new_w = step_batch(
            state.positions[active_idx], state.velocities[active_idx],
            state.quats[active_idx], state.thrusts[active_idx],
            state.body_rates[active_idx], cmd_thrust, cmd_rate,
            self.cfg.dt_control, self.dynamics, drone_ids=active_idx,
        )
        return self._finish(clipped, active_idx, new_p, new_v, new_q, new_t, new_w)


class EnvBatch:
    """Steps several independent env instances with a single dynamics call.

    Bookkeeping stays per-instance, so results match stepping the instances
    one by one. On divergence the failing instances are reset and reported as
    None outcomes; healthy instances proceed unaffected.
    """

    def __init__(self, envs: list[RaceEnv]):
        if not envs:
            raise ConfigError("EnvBatch needs at least one env")
        self.envs = list(envs)

    def __len__(self):
        return len(self.envs)

    def reset_all(self, seed: int) -> np.ndarray:
        return np.stack([env.reset(seed) for env in self.envs])

    def step_all(self, actions: np.ndarray) -> list:
        """actions: (n_envs, n_drones, 4). Returns one StepOutcome (or None) per env."""
        prepared = [env._prepare(actions[k]) for k, env in enumerate(self.envs)]
        counts = [p[1].size for p in prepared]
        offsets = np.concatenate([[0], np.cumsum(counts)])
        pos = np.concatenate([env.state.positions[p[1]] for env, p in zip(self.envs, prepared)])
        vel = np.concatenate([env.state.velocities[p[1]] for env, p in zip(self.envs, prepared)])
        quat = np.concatenate([env.state.quats[p[1]] for env, p in zip(self.envs, prepared)])
        thrust = np.concatenate([env.state.thrusts[p[1]] for env, p in zip(self.envs, prepared)])
        rate = np.concatenate([env.state.body_rates[p[1]] for env, p in zip(self.envs, prepared)])
        cmd_t = np.concatenate([p[2] for p in prepared])
        cmd_w = np.concatenate([p[3] for p in prepared])

        dt = self.envs[0].cfg.dt_control
        dyn = self.envs[0].dynamics
        try:
            new = step_batch(pos, vel, quat, thrust, rate, cmd_t, cmd_w, dt, dyn)
        except Exception:
            return self._step_individually(actions)

        outcomes = []
        for k, (env, (clipped, active_idx, _, _)) in enumerate(zip(self.envs, prepared)):
            sl = slice(offsets[k], offsets[k + 1])
            outcomes.append(env._finish(
                clipped, active_idx, new[0][sl], new[1][sl], new[2][sl], new[3][sl], new[4][sl]
            ))
        return outcomes

    def _step_individually(self, actions) -> list:
        from .errors import SimulationDiverged

        outcomes = []
        for k, env in enumerate(self.envs):
            try:
                outcomes.append(env.step(actions[k]))
            except SimulationDiverged:
                env.reset()
                outcomes.append(None)
        return outcomes
