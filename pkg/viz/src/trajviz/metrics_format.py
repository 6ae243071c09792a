"""Parser for swarmrace training metrics logs.

The log is a CSV file with CRLF line endings and one row per optimizer
update. Counter-like columns are integers, everything else is a float
(``nan`` marks updates that finished no episode). ``format_metrics``
reproduces a parsed file byte for byte.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParseError

INT_COLUMNS = frozenset({
    "update", "step_per_drone", "step_per_env", "episodes",
    "collision_steps", "n_valid", "skipped_update", "diverged_envs",
})
FLOAT_COLUMNS = (
    "mean_return", "mean_length", "mean_waypoints", "actor_loss",
    "critic_loss", "entropy", "grad_norm", "clip_fraction", "value_std",
)
REQUIRED_COLUMNS = tuple(sorted(INT_COLUMNS)) + FLOAT_COLUMNS


@dataclass
class MetricsLog:
    path: Path
    column_order: list
    columns: dict

    @property
    def n_rows(self) -> int:
        return len(self.columns[self.column_order[0]])

    @property
    def label(self) -> str:
        """Series label for overlays: the parent run directory when the file
        keeps its standard name, otherwise the file stem."""
        if self.path.stem == "metrics" and self.path.parent.name:
            return self.path.parent.name
        return self.path.stem

    def __getitem__(self, name):
        return self.columns[name]


def parse_metrics_file(path) -> MetricsLog:
    path = Path(path)
    try:
        # bytes, not read_text: universal newlines would eat the CRLFs
        text = path.read_bytes().decode("utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc.strerror}", path) from None
    except UnicodeDecodeError:
        raise ParseError("file is not UTF-8 text", path) from None
    lines = text.split("\r\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or not lines[0].strip():
        raise ParseError("empty file", path, 1)
    order = lines[0].split(",")
    if len(set(order)) != len(order):
        raise ParseError("duplicate column name in header", path, 1)
    for name in REQUIRED_COLUMNS:
        if name not in order:
            raise ParseError(f"missing column {name!r}", path, 1)
    if len(lines) == 1:
        raise ParseError("no data rows", path, 1)

    values = {name: [] for name in order}
    for idx, line in enumerate(lines[1:], start=2):
        if line == "":
            raise ParseError("blank line inside the table", path, idx)
        cells = line.split(",")
        if len(cells) != len(order):
            raise ParseError(
                f"expected {len(order)} cells, got {len(cells)}", path, idx)
        for name, cell in zip(order, cells):
            if name in INT_COLUMNS:
                try:
                    values[name].append(int(cell))
                except ValueError:
                    raise ParseError(
                        f"column {name!r} must be an integer, got {cell!r}",
                        path, idx) from None
            else:
                try:
                    values[name].append(float(cell))
                except ValueError:
                    raise ParseError(
                        f"column {name!r} must be a number, got {cell!r}",
                        path, idx) from None
    columns = {
        name: np.array(vals, dtype=int if name in INT_COLUMNS else float)
        for name, vals in values.items()
    }
    return MetricsLog(path=path, column_order=order, columns=columns)


def format_metrics(log: MetricsLog) -> str:
    """Serialize back to CSV; inverse of parse on valid files."""
    lines = [",".join(log.column_order)]
    for i in range(log.n_rows):
        cells = []
        for name in log.column_order:
            value = log.columns[name][i]
            if name in INT_COLUMNS:
                cells.append(str(int(value)))
            else:
                value = float(value)
                cells.append("nan" if math.isnan(value) else repr(value))
        lines.append(",".join(cells))
    return "\r\n".join(lines) + "\r\n"
