"""Parser for swarmrace trajectory files.

The format is line-oriented text: a version tag, ``# key: value`` header
lines (track JSON, drone count, timestep, seed, column list), then one space
separated row per control step with 16 columns per drone:

    px py pz vx vy vz qw qx qy qz thrust wx wy wz waypoint events

Floats are written with repr by the producer, so ``format_trajectory``
regenerates a parsed file byte for byte. This module deliberately does not
import the producing package; the file format is the contract.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParseError

FORMAT_TAG = "swarmrace-trajectory v1"
EVENT_WAYPOINT = 1
EVENT_CONTACT = 2
EVENT_BOUNDARY = 4

PER_DRONE_FIELDS = ("px", "py", "pz", "vx", "vy", "vz", "qw", "qx", "qy", "qz",
                    "thrust", "wx", "wy", "wz", "waypoint", "events")
REQUIRED_HEADERS = ("track", "n_drones", "dt", "seed", "columns")
REQUIRED_TRACK_KEYS = ("name", "waypoints", "waypoint_radius", "workspace",
                       "laps", "waypoint_noise_sigma")


@dataclass
class TrajectoryData:
    """One recorded run; arrays are indexed (step, drone, ...)."""

    track: dict
    dt: float
    seed: int
    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    quats: np.ndarray
    thrusts: np.ndarray
    body_rates: np.ndarray
    waypoint_counts: np.ndarray
    event_flags: np.ndarray

    @property
    def n_steps(self) -> int:
        return self.positions.shape[0]

    @property
    def n_drones(self) -> int:
        return self.positions.shape[1]

    def speeds(self) -> np.ndarray:
        """Per-step speed magnitude, shape (steps, drones)."""
        return np.linalg.norm(self.velocities, axis=-1)


def column_names(n_drones: int) -> list:
    names = ["time"]
    for d in range(n_drones):
        names.extend(f"d{d}_{field}" for field in PER_DRONE_FIELDS)
    return names


def _validate_track(track, path, line_no) -> dict:
    if not isinstance(track, dict):
        raise ParseError("track header is not a JSON object", path, line_no)
    for key in REQUIRED_TRACK_KEYS:
        if key not in track:
            raise ParseError(f"track header misses key {key!r}", path, line_no)
    waypoints = track["waypoints"]
    if not waypoints or any(len(wp) != 3 for wp in waypoints):
        raise ParseError("track waypoints must be a non-empty list of [x, y, z]",
                         path, line_no)
    ws = track["workspace"]
    if not isinstance(ws, dict) or sorted(ws) != ["hi", "lo"]:
        raise ParseError("track workspace must carry 'lo' and 'hi' corners",
                         path, line_no)
    return track


def parse_trajectory_file(path) -> TrajectoryData:
    path = Path(path)
    try:
        raw = path.read_text().splitlines()
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc.strerror}", path) from None
    if not raw:
        raise ParseError("empty file", path, 1)
    if raw[0].strip() != f"# {FORMAT_TAG}":
        raise ParseError(f"missing format tag {FORMAT_TAG!r}", path, 1)

    header = {}
    body_start = None
    for idx, line in enumerate(raw[1:], start=2):
        if not line.startswith("#"):
            body_start = idx
            break
        body = line[1:].strip()
        if ":" not in body:
            raise ParseError(f"header line is not 'key: value': {body!r}", path, idx)
        key, value = body.split(":", 1)
        key = key.strip()
        if key in header:
            raise ParseError(f"duplicate header key {key!r}", path, idx)
        header[key] = (value.strip(), idx)

    for key in REQUIRED_HEADERS:
        if key not in header:
            raise ParseError(f"missing header key {key!r}", path,
                             body_start or len(raw))
    try:
        track = json.loads(header["track"][0])
    except json.JSONDecodeError as exc:
        raise ParseError(f"track header is not valid JSON: {exc}", path,
                         header["track"][1]) from None
    track = _validate_track(track, path, header["track"][1])
    try:
        n_drones = int(header["n_drones"][0])
    except ValueError:
        raise ParseError("n_drones is not an integer", path,
                         header["n_drones"][1]) from None
    if n_drones < 1:
        raise ParseError("n_drones must be >= 1", path, header["n_drones"][1])
    try:
        dt = float(header["dt"][0])
    except ValueError:
        raise ParseError("dt is not a number", path, header["dt"][1]) from None
    try:
        seed = int(header["seed"][0])
    except ValueError:
        raise ParseError("seed is not an integer", path, header["seed"][1]) from None

    expected = column_names(n_drones)
    declared = header["columns"][0].split()
    if declared != expected:
        missing = [c for c in expected if c not in declared]
        extra = [c for c in declared if c not in expected]
        detail = []
        if missing:
            detail.append("missing column " + ", ".join(missing))
        if extra:
            detail.append("unexpected column " + ", ".join(extra))
        if not detail:
            detail.append("columns out of order")
        raise ParseError("; ".join(detail), path, header["columns"][1])

    rows = []
    if body_start is not None:
        for idx, line in enumerate(raw[body_start - 1:], start=body_start):
            if not line.strip():
                continue
            if line.startswith("#"):
                raise ParseError("header line after data began", path, idx)
            parts = line.split()
            if len(parts) != len(expected):
                raise ParseError(
                    f"expected {len(expected)} columns, got {len(parts)}",
                    path, idx)
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                bad = next(p for p in parts if not _is_number(p))
                raise ParseError(f"non-numeric value {bad!r}", path, idx) from None

    n_steps = len(rows)
    data = TrajectoryData(
        track=track, dt=dt, seed=seed,
        times=np.zeros(n_steps),
        positions=np.zeros((n_steps, n_drones, 3)),
        velocities=np.zeros((n_steps, n_drones, 3)),
        quats=np.zeros((n_steps, n_drones, 4)),
        thrusts=np.zeros((n_steps, n_drones)),
        body_rates=np.zeros((n_steps, n_drones, 3)),
        waypoint_counts=np.zeros((n_steps, n_drones), dtype=int),
        event_flags=np.zeros((n_steps, n_drones), dtype=int),
    )
    for t, row in enumerate(rows):
        data.times[t] = row[0]
        for d in range(n_drones):
            base = 1 + 16 * d
            data.positions[t, d] = row[base:base + 3]
            data.velocities[t, d] = row[base + 3:base + 6]
            data.quats[t, d] = row[base + 6:base + 10]
            data.thrusts[t, d] = row[base + 10]
            data.body_rates[t, d] = row[base + 11:base + 14]
            data.waypoint_counts[t, d] = int(row[base + 14])
            data.event_flags[t, d] = int(row[base + 15])
    return data


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def format_trajectory(data: TrajectoryData) -> str:
    """Serialize back to the file format; inverse of parse on valid files."""
    n = data.n_drones
    lines = [
        f"# {FORMAT_TAG}",
        f"# track: {json.dumps(data.track)}",
        f"# n_drones: {n}",
        f"# dt: {data.dt!r}",
        f"# seed: {data.seed}",
        f"# columns: {' '.join(column_names(n))}",
    ]
    for t in range(data.n_steps):
        parts = [repr(float(data.times[t]))]
        for d in range(n):
            parts.extend(repr(float(x)) for x in data.positions[t, d])
            parts.extend(repr(float(x)) for x in data.velocities[t, d])
            parts.extend(repr(float(x)) for x in data.quats[t, d])
            parts.append(repr(float(data.thrusts[t, d])))
            parts.extend(repr(float(x)) for x in data.body_rates[t, d])
            parts.append(str(int(data.waypoint_counts[t, d])))
            parts.append(str(int(data.event_flags[t, d])))
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"
