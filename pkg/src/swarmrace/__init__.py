"""Decentralized multi-drone waypoint racing: simulation, training, evaluation."""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import RunConfig, resolve_run_config, run_config_from_dict, run_config_to_dict
from .dynamics import ActuatorCommand, DynamicsParams, QuadState, step, step_batch
from .env import EnvBatch, EnvConfig, RaceEnv, build_observation, denormalize_action
from .errors import (
    CheckpointError,
    ConfigError,
    InvalidStateError,
    SimulationDiverged,
    TrainingDiverged,
    TrajectoryFormatError,
)
from .evaluation import EvalSummary, TrialResult, evaluate, export_trajectory, run_trial
from .nets import AdamOptimizer, Mlp, PolicyValueNet
from .rewards import RewardBreakdown, RewardParams, total_reward
from .track import TrackSpec, builtin_track_names, load_track, save_track
from .trainer import TrainConfig, ValueNormStats, compute_gae, ppo_update, train
from .trajectory import Trajectory, parse_trajectory, write_trajectory

__version__ = "0.1.0"

__all__ = [
    "ActuatorCommand",
    "AdamOptimizer",
    "Checkpoint",
    "CheckpointError",
    "ConfigError",
    "DynamicsParams",
    "EnvBatch",
    "EnvConfig",
    "EvalSummary",
    "InvalidStateError",
    "Mlp",
    "PolicyValueNet",
    "QuadState",
    "RaceEnv",
    "RewardBreakdown",
    "RewardParams",
    "RunConfig",
    "SimulationDiverged",
    "TrackSpec",
    "TrainConfig",
    "TrainingDiverged",
    "Trajectory",
    "TrajectoryFormatError",
    "TrialResult",
    "ValueNormStats",
    "build_observation",
    "builtin_track_names",
    "compute_gae",
    "denormalize_action",
    "evaluate",
    "export_trajectory",
    "load_checkpoint",
    "load_track",
    "parse_trajectory",
    "ppo_update",
    "resolve_run_config",
    "run_config_from_dict",
    "run_config_to_dict",
    "run_trial",
    "save_checkpoint",
    "save_track",
    "step",
    "step_batch",
    "total_reward",
    "train",
    "write_trajectory",
]
