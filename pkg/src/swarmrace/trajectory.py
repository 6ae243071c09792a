"""Delimited-text trajectory files.

One row per control step. Header lines start with ``#`` and carry the track
description plus run metadata; the first header line is a format version tag.
Layout:

    # swarmrace-trajectory v1
    # track: {...json of the track...}
    # n_drones: 2
    # dt: 0.01
    # seed: 7
    # columns: time d0_px d0_py ... d1_events

Row columns are space separated: the step time, then 16 values per drone in
order px py pz vx vy vz qw qx qy qz thrust wx wy wz waypoint events. Floats
are written with repr so parsing recovers them bit-exactly. The events column
is an integer bitmask: 1 = waypoint passed this step, 2 = within the collision
threshold of some neighbor, 4 = left the workspace this step.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import TrajectoryFormatError
from .track import TrackSpec, track_from_dict, track_to_dict

FORMAT_TAG = "swarmrace-trajectory v1"
EVENT_WAYPOINT = 1
EVENT_CONTACT = 2
EVENT_BOUNDARY = 4

PER_DRONE_FIELDS = ("px", "py", "pz", "vx", "vy", "vz", "qw", "qx", "qy", "qz",
                    "thrust", "wx", "wy", "wz", "waypoint", "events")


@dataclass
class Trajectory:
    """Recorded run: arrays indexed (step, drone, ...)."""

    track: TrackSpec
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


def column_names(n_drones: int) -> list:
    names = ["time"]
    for d in range(n_drones):
        names.extend(f"d{d}_{f}" for f in PER_DRONE_FIELDS)
    return names


def write_trajectory(path, traj: Trajectory) -> None:
    n = traj.n_drones
    lines = [
        f"# {FORMAT_TAG}",
        f"# track: {json.dumps(track_to_dict(traj.track))}",
        f"# n_drones: {n}",
        f"# dt: {traj.dt!r}",
        f"# seed: {traj.seed}",
        f"# columns: {' '.join(column_names(n))}",
    ]
    for t in range(traj.n_steps):
        parts = [repr(float(traj.times[t]))]
        for d in range(n):
            parts.extend(repr(float(x)) for x in traj.positions[t, d])
            parts.extend(repr(float(x)) for x in traj.velocities[t, d])
            parts.extend(repr(float(x)) for x in traj.quats[t, d])
            parts.append(repr(float(traj.thrusts[t, d])))
            parts.extend(repr(float(x)) for x in traj.body_rates[t, d])
            parts.append(str(int(traj.waypoint_counts[t, d])))
            parts.append(str(int(traj.event_flags[t, d])))
        lines.append(" ".join(parts))
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_header_value(line: str, line_no: int):
    body = line[1:].strip()
    if ":" not in body:
        raise TrajectoryFormatError(f"header line has no 'key: value' form: {body!r}",
                                    line_no=line_no)
    key, value = body.split(":", 1)
    return key.strip(), value.strip()


def parse_trajectory(path) -> Trajectory:
    path = Path(path)
    try:
        raw_lines = path.read_text().splitlines()
    except OSError as exc:
        raise TrajectoryFormatError(f"cannot read {path}: {exc.strerror}") from None
    if not raw_lines:
        raise TrajectoryFormatError("empty file", line_no=1)
    if raw_lines[0].strip() != f"# {FORMAT_TAG}":
        raise TrajectoryFormatError(
            f"missing format tag {FORMAT_TAG!r}", line_no=1)

    header = {}
    body_start = None
    for idx, line in enumerate(raw_lines[1:], start=2):
        if not line.startswith("#"):
            body_start = idx
            break
        key, value = _parse_header_value(line, idx)
        if key in header:
            raise TrajectoryFormatError(f"duplicate header key {key!r}", line_no=idx)
        header[key] = (value, idx)

    for key in ("track", "n_drones", "dt", "seed", "columns"):
        if key not in header:
            raise TrajectoryFormatError(f"missing header key {key!r}",
                                        line_no=body_start or len(raw_lines))
    try:
        track = track_from_dict(json.loads(header["track"][0]))
    except Exception as exc:
        raise TrajectoryFormatError(f"bad track header: {exc}",
                                    line_no=header["track"][1]) from None
    try:
        n_drones = int(header["n_drones"][0])
        dt = float(header["dt"][0])
        seed = int(header["seed"][0])
    except ValueError as exc:
        raise TrajectoryFormatError(f"bad header value: {exc}",
                                    line_no=header["n_drones"][1]) from None
    if n_drones < 1:
        raise TrajectoryFormatError("n_drones must be >= 1",
                                    line_no=header["n_drones"][1])
    expected_cols = column_names(n_drones)
    if header["columns"][0].split() != expected_cols:
        raise TrajectoryFormatError(
            f"columns header does not match the documented layout for "
            f"{n_drones} drone(s)", line_no=header["columns"][1])

    rows = []
    if body_start is not None:
        for idx, line in enumerate(raw_lines[body_start - 1:], start=body_start):
            if not line.strip():
                continue
            if line.startswith("#"):
                raise TrajectoryFormatError("header line after data began",
                                            line_no=idx)
            parts = line.split()
            if len(parts) != len(expected_cols):
                raise TrajectoryFormatError(
                    f"expected {len(expected_cols)} columns, got {len(parts)}",
                    line_no=idx)
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                raise TrajectoryFormatError(f"non-numeric value in row",
                                            line_no=idx) from None

    n_steps = len(rows)
    times = np.zeros(n_steps)
    positions = np.zeros((n_steps, n_drones, 3))
    velocities = np.zeros((n_steps, n_drones, 3))
    quats = np.zeros((n_steps, n_drones, 4))
    thrusts = np.zeros((n_steps, n_drones))
    body_rates = np.zeros((n_steps, n_drones, 3))
    waypoint_counts = np.zeros((n_steps, n_drones), dtype=int)
    event_flags = np.zeros((n_steps, n_drones), dtype=int)
    for t, row in enumerate(rows):
        times[t] = row[0]
        for d in range(n_drones):
            base = 1 + 16 * d
            positions[t, d] = row[base:base + 3]
            velocities[t, d] = row[base + 3:base + 6]
            quats[t, d] = row[base + 6:base + 10]
            thrusts[t, d] = row[base + 10]
            body_rates[t, d] = row[base + 11:base + 14]
            waypoint_counts[t, d] = int(row[base + 14])
            event_flags[t, d] = int(row[base + 15])
    return Trajectory(
        track=track, dt=dt, seed=seed, times=times, positions=positions,
        velocities=velocities, quats=quats, thrusts=thrusts,
        body_rates=body_rates, waypoint_counts=waypoint_counts,
        event_flags=event_flags,
    )
