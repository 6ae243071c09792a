"""Offline plotting for swarmrace trajectory and metrics files."""

from .errors import ParseError
from .metrics_format import MetricsLog, format_metrics, parse_metrics_file
from .plots import COLOR_MODES, TRACK_KINDS, plot_track, plot_training, save
from .traj_format import (
    EVENT_BOUNDARY,
    EVENT_CONTACT,
    EVENT_WAYPOINT,
    TrajectoryData,
    column_names,
    format_trajectory,
    parse_trajectory_file,
)

__version__ = "0.1.0"

__all__ = [
    "COLOR_MODES",
    "EVENT_BOUNDARY",
    "EVENT_CONTACT",
    "EVENT_WAYPOINT",
    "MetricsLog",
    "ParseError",
    "TRACK_KINDS",
    "TrajectoryData",
    "column_names",
    "format_metrics",
    "format_trajectory",
    "parse_metrics_file",
    "parse_trajectory_file",
    "plot_track",
    "plot_training",
    "save",
]
