"""Per-drone, per-step reward with four additive components.

* target: progress along the distance-to-goal surrogate L(p) =
  sqrt(max(||p - g||^2 - (eta * d_w)^2, 0)), i.e. the tangent length from p to
  a virtual sphere of radius eta*d_w centered on the next waypoint. Passing
  the waypoint pays a fixed bonus instead.
* smooth: penalizes body rate magnitude and action change between steps.
* safe: directional penalty for converging neighbor pairs, shaped by distance
  and closing speed. Active only when the pair is actually approaching.
* crash: fixed penalty per neighbor inside the contact tolerance; otherwise a
  boundary penalty when outside the workspace box.

All functions are pure. Positions, velocities and actions are numpy arrays;
neighbor deltas follow the convention (other minus self).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass
class RewardParams:
    """Weights and geometry for the reward. Distances in meters."""

    body_rate_weight: float = 2e-4
    action_diff_weight: float = 1e-4
    proximity_weight: float = 2.4
    approach_weight: float = 0.5
    tangent_ratio: float = 0.75
    proximity_decay: float = 15.0
    arrival_bonus: float = 5.0
    collision_penalty: float = 0.5
    boundary_penalty: float = 30.0
    safe_radius: float = 0.10
    safety_tolerance: float = 0.10
    waypoint_radius: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.tangent_ratio < 1.0:
            raise ConfigError(f"tangent_ratio must be in (0, 1), got {self.tangent_ratio}")
        if self.proximity_decay <= 0.0:
            raise ConfigError(f"proximity_decay must be > 0, got {self.proximity_decay}")
        if self.safe_radius <= 0.0:
            raise ConfigError(f"safe_radius must be > 0, got {self.safe_radius}")
        if self.safety_tolerance < 0.0:
            raise ConfigError(f"safety_tolerance must be >= 0, got {self.safety_tolerance}")
        if self.waypoint_radius <= 0.0:
            raise ConfigError(f"waypoint_radius must be > 0, got {self.waypoint_radius}")
        for name in (
            "body_rate_weight",
            "action_diff_weight",
            "proximity_weight",
            "approach_weight",
            "arrival_bonus",
            "collision_penalty",
            "boundary_penalty",
        ):
            if getattr(self, name) < 0.0:
                raise ConfigError(f"{name} must be >= 0")


@dataclass
class RewardBreakdown:
    target: float
    smooth: float
    safe: float
    crash: float
    total: float

    @classmethod
    def build(cls, target: float, smooth: float, safe: float, crash: float) -> "RewardBreakdown":
        return cls(target, smooth, safe, crash, target + smooth + safe + crash)


def tangent_distance(p, goal, params: RewardParams) -> float:
    """Length of the tangent from p to the virtual sphere around the goal.

    The radicand is clamped at zero: the arrival check fires at the (larger)
    waypoint radius, so a negative radicand can only be float skim.
    """
    d_sq = float(np.dot(np.asarray(p) - np.asarray(goal), np.asarray(p) - np.asarray(goal)))
    inner = params.tangent_ratio * params.waypoint_radius
    return math.sqrt(max(d_sq - inner * inner, 0.0))


def target_reward(p_prev, p_now, goal, passed: bool, params: RewardParams) -> float:
    if passed:
        return params.arrival_bonus
    return tangent_distance(p_prev, goal, params) - tangent_distance(p_now, goal, params)


def smooth_reward(body_rate, action_prev, action_now, params: RewardParams) -> float:
    rate_norm = float(np.linalg.norm(body_rate))
    diff_norm = float(np.linalg.norm(np.asarray(action_now) - np.asarray(action_prev)))
    return -params.body_rate_weight * rate_norm - params.action_diff_weight * diff_norm


def _approach_cosine(dp: np.ndarray, dv: np.ndarray) -> float:
    """Cosine of the angle between separation and relative velocity.

    Zero when either vector vanishes: a non-moving neighbor carries no
    directional risk (contact itself is handled by crash_reward).
    """
    dist = float(np.linalg.norm(dp))
    speed = float(np.linalg.norm(dv))
    if dist == 0.0 or speed == 0.0:
        return 0.0
    return float(np.dot(dp, dv)) / (dist * speed)


def proximity_factor(dist: float, params: RewardParams) -> float:
    """exp decay in the gap beyond contact distance, saturating at 1."""
    return min(math.exp(-params.proximity_decay * (dist - 2.0 * params.safe_radius)), 1.0)


def approach_factor(dist: float, params: RewardParams) -> float:
    """Squared ramp from 1 (close) to 0 at dist >= 3R + waypoint_radius."""
    ramp = 1.0 - (dist - 3.0 * params.safe_radius) / params.waypoint_radius
    return float(np.clip(ramp, 0.0, 1.0)) ** 2


def safe_reward(i: int, positions, velocities, params: RewardParams, active=None) -> float:
    positions = np.asarray(positions, dtype=float)
    velocities = np.asarray(velocities, dtype=float)
    n = positions.shape[0]
    total = 0.0
    for j in range(n):
        if j == i or (active is not None and not active[j]):
            continue
        dp = positions[j] - positions[i]
        dv = velocities[j] - velocities[i]
        cos_ij = _approach_cosine(dp, dv)
        if cos_ij >= 0.0:
            continue
        dist = float(np.linalg.norm(dp))
        speed = float(np.linalg.norm(dv))
        total += cos_ij * (
            params.proximity_weight * proximity_factor(dist, params)
            + params.approach_weight * speed * approach_factor(dist, params)
        )
    return total


def crash_reward(i: int, positions, workspace_lo, workspace_hi, params: RewardParams,
                 active=None) -> float:
    """Contact penalty per offending neighbor; else boundary penalty; else 0.

    The cases are exclusive with contact taking precedence, so a drone shoved
    out of bounds during a collision is charged for the collision only.
    """
    positions = np.asarray(positions, dtype=float)
    threshold = 2.0 * params.safe_radius + params.safety_tolerance
    n = positions.shape[0]
    offenders = 0
    for j in range(n):
        if j == i or (active is not None and not active[j]):
            continue
        if np.linalg.norm(positions[j] - positions[i]) <= threshold:
            offenders += 1
    if offenders > 0:
        return -params.collision_penalty * offenders
    p = positions[i]
    lo = np.asarray(workspace_lo, dtype=float)
    hi = np.asarray(workspace_hi, dtype=float)
    if np.any(p < lo) or np.any(p > hi):
        return -params.boundary_penalty
    return 0.0


def total_reward(
    i: int,
    p_prev,
    goal,
    passed: bool,
    body_rate,
    action_prev,
    action_now,
    positions,
    velocities,
    workspace_lo,
    workspace_hi,
    params: RewardParams,
    active=None,
) -> RewardBreakdown:
    """Sum of the four components for drone i after one step.

    positions/velocities hold the post-step state of every drone; p_prev is
    drone i's position before the step.
    """
    positions = np.asarray(positions, dtype=float)
    return RewardBreakdown.build(
        target=target_reward(p_prev, positions[i], goal, passed, params),
        smooth=smooth_reward(body_rate, action_prev, action_now, params),
        safe=safe_reward(i, positions, velocities, params, active=active),
        crash=crash_reward(i, positions, workspace_lo, workspace_hi, params, active=active),
    )
