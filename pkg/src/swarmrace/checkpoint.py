"""Single-file binary checkpoints for policies.

Layout (all integers and floats little-endian):

    bytes 0..7    magic b"SWRMRC01" (8 bytes, doubles as the version tag)
    bytes 8..23   4 x u32: observation length, drone count, lookahead,
                  number of named arrays
    then per array:
        u16  name length
        ...  name (utf-8)
        u8   ndim
        ndim x u32 dimensions
        prod(dims) x f8 data

Named arrays hold every network parameter (see nets.PolicyValueNet), the
log_spread vector, the value-normalization statistics (value_mean, value_std,
value_count) and the global step counter. The format is easy to parse from
any language; loaders must reject trailing bytes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CheckpointError
from .nets import PolicyValueNet

MAGIC = b"SWRMRC01"
_HEADER = struct.Struct("<4I")

STAT_KEYS = ("value_mean", "value_std", "value_count", "global_step")


@dataclass
class Checkpoint:
    net: PolicyValueNet
    n_drones: int
    lookahead: int
    value_mean: float
    value_std: float
    value_count: float
    global_step: int
    arrays: dict

    @property
    def obs_len(self) -> int:
        return self.net.obs_len


def save_checkpoint(path, net: PolicyValueNet, n_drones: int, lookahead: int,
                    value_mean: float = 0.0, value_std: float = 1.0,
                    value_count: float = 0.0, global_step: int = 0) -> None:
    arrays = dict(net.to_arrays())
    arrays["value_mean"] = np.array([value_mean], dtype=float)
    arrays["value_std"] = np.array([value_std], dtype=float)
    arrays["value_count"] = np.array([value_count], dtype=float)
    arrays["global_step"] = np.array([float(global_step)], dtype=float)

    chunks = [MAGIC, _HEADER.pack(net.obs_len, n_drones, lookahead, len(arrays))]
    for name in sorted(arrays):
        data = np.ascontiguousarray(arrays[name], dtype="<f8")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", data.ndim))
        chunks.append(struct.pack(f"<{data.ndim}I", *data.shape))
        chunks.append(data.tobytes())
    Path(path).write_bytes(b"".join(chunks))


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.offset = 0

    def take(self, count: int, what: str) -> bytes:
        if self.offset + count > len(self.blob):
            raise CheckpointError(f"file truncated while reading {what}", offset=self.offset)
        out = self.blob[self.offset:self.offset + count]
        self.offset += count
        return out

    def u16(self, what: str) -> int:
        return struct.unpack("<H", self.take(2, what))[0]

    def u8(self, what: str) -> int:
        return self.take(1, what)[0]


def read_arrays(path) -> tuple[int, int, int, dict]:
    """Parse the raw file into (obs_len, n_drones, lookahead, arrays)."""
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc.strerror}") from None
    reader = _Reader(blob)
    magic = reader.take(len(MAGIC), "magic")
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}, expected {MAGIC!r}", offset=0)
    header_at = reader.offset
    obs_len, n_drones, lookahead, n_arrays = _HEADER.unpack(reader.take(_HEADER.size, "header"))
    if n_drones < 1 or lookahead < 1 or obs_len < 1:
        raise CheckpointError("header fields must be positive", offset=header_at)
    arrays = {}
    for _ in range(n_arrays):
        name_at = reader.offset
        name_len = reader.u16("array name length")
        name = reader.take(name_len, "array name").decode("utf-8", errors="replace")
        if name in arrays:
            raise CheckpointError(f"duplicate array {name!r}", offset=name_at)
        ndim = reader.u8("array rank")
        if ndim > 2:
            raise CheckpointError(f"array {name!r} has unsupported rank {ndim}", offset=reader.offset - 1)
        dims = struct.unpack(f"<{ndim}I", reader.take(4 * ndim, "array dimensions"))
        count = 1
        for d in dims:
            count *= d
        data = np.frombuffer(reader.take(8 * count, f"array {name!r} data"), dtype="<f8")
        arrays[name] = data.reshape(dims).astype(float)
    if reader.offset != len(blob):
        raise CheckpointError("trailing bytes after last array", offset=reader.offset)
    return obs_len, n_drones, lookahead, arrays


def load_checkpoint(path) -> Checkpoint:
    obs_len, n_drones, lookahead, arrays = read_arrays(path)
    for key in STAT_KEYS:
        if key not in arrays or arrays[key].shape != (1,):
            raise CheckpointError(f"missing or malformed statistic {key!r}")
    try:
        net = PolicyValueNet.from_arrays(arrays)
    except Exception as exc:
        raise CheckpointError(f"cannot rebuild networks: {exc}") from None
    if net.obs_len != obs_len:
        raise CheckpointError(
            f"header observation length {obs_len} does not match actor input {net.obs_len}"
        )
    std = float(arrays["value_std"][0])
    if not std > 0.0:
        raise CheckpointError(f"value_std must be > 0, got {std}")
    return Checkpoint(
        net=net,
        n_drones=n_drones,
        lookahead=lookahead,
        value_mean=float(arrays["value_mean"][0]),
        value_std=std,
        value_count=float(arrays["value_count"][0]),
        global_step=int(arrays["global_step"][0]),
        arrays=arrays,
    )
