"""Waypoint track definitions, YAML persistence, and the bundled tracks.

A track is an ordered loop of waypoint centers inside an axis-aligned
workspace box. Drones must pass within ``waypoint_radius`` of each waypoint in
order, wrapping around the list for the configured number of laps. Bundled
tracks are geometric approximations and carry no claim of matching any
particular published course.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError

DEFAULT_WORKSPACE_LO = (-20.0, -20.0, 0.0)
DEFAULT_WORKSPACE_HI = (20.0, 20.0, 10.0)


@dataclass
class TrackSpec:
    name: str
    waypoints: np.ndarray
    waypoint_radius: float = 1.0
    workspace_lo: np.ndarray = field(default_factory=lambda: np.array(DEFAULT_WORKSPACE_LO))
    workspace_hi: np.ndarray = field(default_factory=lambda: np.array(DEFAULT_WORKSPACE_HI))
    laps: int = 3
    waypoint_noise_sigma: float = 0.1

    def __post_init__(self):
        self.waypoints = np.asarray(self.waypoints, dtype=float)
        self.workspace_lo = np.asarray(self.workspace_lo, dtype=float)
        self.workspace_hi = np.asarray(self.workspace_hi, dtype=float)
        if self.waypoints.ndim != 2 or self.waypoints.shape[1] != 3:
            raise ConfigError(f"waypoints must have shape (n, 3), got {self.waypoints.shape}")
        if self.waypoints.shape[0] < 2:
            raise ConfigError("a track needs at least 2 waypoints")
        if self.workspace_lo.shape != (3,) or self.workspace_hi.shape != (3,):
            raise ConfigError("workspace corners must be 3-vectors")
        if np.any(self.workspace_lo >= self.workspace_hi):
            raise ConfigError("workspace min corner must be strictly below max corner")
        if self.waypoint_radius <= 0.0:
            raise ConfigError(f"waypoint_radius must be > 0, got {self.waypoint_radius}")
        if int(self.laps) != self.laps or self.laps < 1:
            raise ConfigError(f"laps must be an integer >= 1, got {self.laps}")
        self.laps = int(self.laps)
        if self.waypoint_noise_sigma < 0.0:
            raise ConfigError("waypoint_noise_sigma must be >= 0")
        inside = (self.waypoints >= self.workspace_lo) & (self.waypoints <= self.workspace_hi)
        if not inside.all():
            bad = int(np.flatnonzero(~inside.all(axis=1))[0])
            raise ConfigError(f"waypoint {bad} lies outside the workspace")

    @property
    def n_waypoints(self) -> int:
        return self.waypoints.shape[0]

    def contains(self, p) -> bool:
        p = np.asarray(p, dtype=float)
        return bool(np.all(p >= self.workspace_lo) and np.all(p <= self.workspace_hi))


def track_to_dict(track: TrackSpec) -> dict:
    return {
        "name": track.name,
        "waypoints": [[float(c) for c in wp] for wp in track.waypoints],
        "waypoint_radius": float(track.waypoint_radius),
        "workspace": {
            "lo": [float(c) for c in track.workspace_lo],
            "hi": [float(c) for c in track.workspace_hi],
        },
        "laps": int(track.laps),
        "waypoint_noise_sigma": float(track.waypoint_noise_sigma),
    }


def track_from_dict(data: dict) -> TrackSpec:
    if not isinstance(data, dict):
        raise ConfigError(f"track document must be a mapping, got {type(data).__name__}")
    try:
        workspace = data.get("workspace", {})
        return TrackSpec(
            name=str(data["name"]),
            waypoints=np.asarray(data["waypoints"], dtype=float),
            waypoint_radius=float(data.get("waypoint_radius", 1.0)),
            workspace_lo=np.asarray(workspace.get("lo", DEFAULT_WORKSPACE_LO), dtype=float),
            workspace_hi=np.asarray(workspace.get("hi", DEFAULT_WORKSPACE_HI), dtype=float),
            laps=int(data.get("laps", 3)),
            waypoint_noise_sigma=float(data.get("waypoint_noise_sigma", 0.1)),
        )
    except KeyError as exc:
        raise ConfigError(f"track document missing required field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"malformed track document: {exc}") from None


def load_track(path) -> TrackSpec:
    """Read a track from a YAML file, or from the bundled set by bare name."""
    path = Path(path)
    if not path.exists() and path.suffix == "" and "/" not in str(path):
        return load_builtin(str(path))
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read track file {path}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"track file {path} is not valid YAML: {exc}") from None
    return track_from_dict(data)


def save_track(track: TrackSpec, path) -> None:
    Path(path).write_text(yaml.safe_dump(track_to_dict(track), sort_keys=False))


def builtin_track_names() -> list[str]:
    files = resources.files("swarmrace").joinpath("tracks")
    return sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".yaml"))


def load_builtin(name: str) -> TrackSpec:
    ref = resources.files("swarmrace").joinpath("tracks").joinpath(f"{name}.yaml")
    if not ref.is_file():
        raise ConfigError(
            f"unknown track {name!r}; bundled tracks: {', '.join(builtin_track_names())}"
        )
    return track_from_dict(yaml.safe_load(ref.read_text()))
