"""Reduced quadrotor model: point-mass translation with linear body-frame drag,
quaternion attitude kinematics, and a first-order lag between commanded and
actual thrust / body rates.

Quaternions are scalar-first (w, x, y, z) and rotate body-frame vectors into
the world frame. Thrust is mass-normalized (units of acceleration). The
integrator is semi-implicit Euler on a fixed physics substep: the actuator lag
is advanced first, then velocity, then position with the updated velocity.
All operations are pure functions of their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InvalidStateError, SimulationDiverged

STANDARD_GRAVITY = 9.81

# Unit-norm tolerance for quaternions fed into public operations; integration
# renormalizes every substep so drift stays far below this.
QUAT_ATOL = 1e-6


def _as_vec3(value, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape != (3,):
        raise ConfigError(f"{name} must be a 3-vector, got shape {arr.shape}")
    return arr


@dataclass
class DynamicsParams:
    """Model constants. Drag coefficients act on the body-frame velocity.

    ``exact_lag`` switches the per-substep lag update from explicit Euler to
    the exact exponential decay of the first-order system.
    """

    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -STANDARD_GRAVITY]))
    drag: np.ndarray = field(default_factory=lambda: np.array([0.29, 0.29, 0.38]))
    thrust_lag: float = 0.05
    rate_lag: float = 0.05
    dt_physics: float = 1e-3
    thrust_ceiling: float = 3.5 * STANDARD_GRAVITY
    exact_lag: bool = False

    def __post_init__(self):
        self.gravity = _as_vec3(self.gravity, "gravity")
        self.drag = _as_vec3(self.drag, "drag")
        if np.any(self.drag < 0.0):
            raise ConfigError("drag coefficients must be >= 0")
        if self.thrust_lag <= 0.0 or self.rate_lag <= 0.0:
            raise ConfigError("lag time constants must be > 0")
        if self.dt_physics <= 0.0:
            raise ConfigError("dt_physics must be > 0")
        if self.thrust_ceiling <= 0.0:
            raise ConfigError("thrust_ceiling must be > 0")

    @property
    def gravity_norm(self) -> float:
        return float(np.linalg.norm(self.gravity))


@dataclass
class QuadState:
    """Physical state of one vehicle."""

    position: np.ndarray
    velocity: np.ndarray
    quat: np.ndarray
    thrust: float
    body_rate: np.ndarray

    def __post_init__(self):
        self.position = _as_vec3(self.position, "position")
        self.velocity = _as_vec3(self.velocity, "velocity")
        self.quat = np.asarray(self.quat, dtype=float)
        if self.quat.shape != (4,):
            raise ConfigError(f"quat must have shape (4,), got {self.quat.shape}")
        self.thrust = float(self.thrust)
        self.body_rate = _as_vec3(self.body_rate, "body_rate")
        if self.thrust < 0.0:
            raise InvalidStateError(f"thrust must be >= 0, got {self.thrust}")

    @classmethod
    def hover(cls, position, thrust: float = STANDARD_GRAVITY) -> "QuadState":
        return cls(
            position=np.asarray(position, dtype=float),
            velocity=np.zeros(3),
            quat=np.array([1.0, 0.0, 0.0, 0.0]),
            thrust=thrust,
            body_rate=np.zeros(3),
        )

    def copy(self) -> "QuadState":
        return QuadState(
            position=self.position.copy(),
            velocity=self.velocity.copy(),
            quat=self.quat.copy(),
            thrust=self.thrust,
            body_rate=self.body_rate.copy(),
        )


@dataclass
class ActuatorCommand:
    """Desired mass-normalized thrust and body rates fed to the lag model."""

    thrust: float
    body_rate: np.ndarray

    def __post_init__(self):
        self.thrust = float(self.thrust)
        self.body_rate = _as_vec3(self.body_rate, "body_rate")
        if not np.isfinite(self.thrust) or self.thrust < 0.0:
            raise ConfigError(f"commanded thrust must be finite and >= 0, got {self.thrust}")
        if not np.all(np.isfinite(self.body_rate)):
            raise ConfigError("commanded body rate must be finite")


def _check_unit_quat(q: np.ndarray) -> None:
    norm = np.linalg.norm(q, axis=-1)
    if np.any(np.abs(norm - 1.0) > QUAT_ATOL):
        raise InvalidStateError(
            f"quaternion norm {np.max(np.abs(norm - 1.0)):.3e} away from 1 exceeds {QUAT_ATOL:.0e}"
        )


def _rotation_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrices for unit quaternions, batched over leading axes."""
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    row0 = np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], axis=-1)
    row1 = np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], axis=-1)
    row2 = np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], axis=-1)
    return np.stack([row0, row1, row2], axis=-2)


def rotation_from_quat(q) -> np.ndarray:
    """Body-to-world rotation matrix for a scalar-first unit quaternion."""
    q = np.asarray(q, dtype=float)
    _check_unit_quat(q)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    return _rotation_matrix(q)


def _quat_rate(q: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """0.5 * q ⊗ (0, omega), batched over leading axes."""
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    ox, oy, oz = omega[..., 0], omega[..., 1], omega[..., 2]
    return 0.5 * np.stack(
        [
            -(x * ox + y * oy + z * oz),
            w * ox + y * oz - z * oy,
            w * oy + z * ox - x * oz,
            w * oz + x * oy - y * ox,
        ],
        axis=-1,
    )


def quat_derivative(q, omega) -> np.ndarray:
    """Time derivative of the attitude quaternion under body rate omega."""
    q = np.asarray(q, dtype=float)
    omega = np.asarray(omega, dtype=float)
    _check_unit_quat(q)
    return _quat_rate(q, omega)


def state_derivative(state: QuadState, params: DynamicsParams):
    """Continuous-time derivative (pos_dot, vel_dot, quat_dot) of a state."""
    rot = rotation_from_quat(state.quat)
    vel_body = rot.T @ state.velocity
    accel = params.gravity + rot[:, 2] * state.thrust - rot @ (params.drag * vel_body)
    return state.velocity.copy(), accel, quat_derivative(state.quat, state.body_rate)


def _lag_fractions(dt: float, params: DynamicsParams) -> tuple[float, float]:
    if params.exact_lag:
        return 1.0 - np.exp(-dt / params.thrust_lag), 1.0 - np.exp(-dt / params.rate_lag)
    return dt / params.thrust_lag, dt / params.rate_lag


def actuator_lag_step(thrust, body_rate, cmd: ActuatorCommand, dt: float, params: DynamicsParams):
    """One lag update moving (thrust, body_rate) toward the commanded values."""
    if dt <= 0.0:
        raise ConfigError(f"dt must be > 0, got {dt}")
    frac_t, frac_w = _lag_fractions(dt, params)
    new_thrust = thrust + frac_t * (cmd.thrust - thrust)
    new_rate = np.asarray(body_rate, dtype=float) + frac_w * (cmd.body_rate - np.asarray(body_rate, dtype=float))
    return new_thrust, new_rate


def _substep_count(dt_control: float, dt_physics: float) -> int:
    ratio = dt_control / dt_physics
    n = int(round(ratio))
    if n < 1 or abs(ratio - n) > 1e-9:
        raise ConfigError(
            f"dt_control={dt_control} must be a positive integer multiple of dt_physics={dt_physics}"
        )
    return n


def step_batch(
    position: np.ndarray,
    velocity: np.ndarray,
    quat: np.ndarray,
    thrust: np.ndarray,
    body_rate: np.ndarray,
    cmd_thrust: np.ndarray,
    cmd_rate: np.ndarray,
    dt_control: float,
    params: DynamicsParams,
    drone_ids: np.ndarray | None = None,
):
    """Advance a batch of drones by one control interval.

    Arrays are shaped (B, 3) / (B, 4) / (B,); inputs are not mutated. Raises
    SimulationDiverged naming the first offending drone if any state component
    turns non-finite.
    """
    n_sub = _substep_count(dt_control, params.dt_physics)
    dt = params.dt_physics
    frac_t, frac_w = _lag_fractions(dt, params)

    p = np.array(position, dtype=float)
    v = np.array(velocity, dtype=float)
    q = np.array(quat, dtype=float)
    t = np.array(thrust, dtype=float)
    w = np.array(body_rate, dtype=float)
    cmd_t = np.asarray(cmd_thrust, dtype=float)
    cmd_w = np.asarray(cmd_rate, dtype=float)
    gravity = params.gravity
    drag = params.drag

    for _ in range(n_sub):
        t += frac_t * (cmd_t - t)
        np.clip(t, 0.0, params.thrust_ceiling, out=t)
        w += frac_w * (cmd_w - w)
        rot = _rotation_matrix(q)
        vel_body = np.einsum("bji,bj->bi", rot, v)
        drag_world = np.einsum("bij,bj->bi", rot, drag * vel_body)
        v += (gravity + rot[:, :, 2] * t[:, None] - drag_world) * dt
        p += v * dt
        q += _quat_rate(q, w) * dt
        q /= np.linalg.norm(q, axis=-1, keepdims=True)

    finite = (
        np.isfinite(p).all(axis=-1)
        & np.isfinite(v).all(axis=-1)
        & np.isfinite(q).all(axis=-1)
        & np.isfinite(t)
        & np.isfinite(w).all(axis=-1)
    )
    if not finite.all():
        bad = int(np.flatnonzero(~finite)[0])
        index = bad if drone_ids is None else int(np.asarray(drone_ids)[bad])
        raise SimulationDiverged(f"non-finite state after integration for drone {index}", drone_index=index)
    return p, v, q, t, w


def step(
    state: QuadState,
    cmd: ActuatorCommand,
    dt_control: float,
    params: DynamicsParams,
    drone_index: int | None = None,
) -> QuadState:
    """Advance a single drone by one control interval of lag + rigid-body substeps."""
    p, v, q, t, w = step_batch(
        state.position[None],
        state.velocity[None],
        state.quat[None],
        np.array([state.thrust]),
        state.body_rate[None],
        np.array([cmd.thrust]),
        cmd.body_rate[None],
        dt_control,
        params,
        drone_ids=None if drone_index is None else np.array([drone_index]),
    )
    return QuadState(position=p[0], velocity=v[0], quat=q[0], thrust=float(t[0]), body_rate=w[0])
