"""Run configuration: one YAML document covering env, reward, and trainer
settings plus the track reference and seed.

Layout mirrors the dataclasses section by section:

    track: loop          # builtin track name or a path to a track file
    seed: 1
    out_dir: runs/demo   # optional; defaults under the output root
    env:      {n_drones: 2, ...}
    reward:   {arrival_bonus: 5.0, ...}
    trainer:  {gamma: 0.99, ...}

Safety geometry (safe_radius, safety_tolerance) lives in the env section and
the waypoint radius on the track; the env applies them to the reward engine,
so the reward section deliberately has no copy of those keys. Unknown keys
anywhere fail loudly with their dotted path.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .env import EnvConfig
from .errors import ConfigError
from .rewards import RewardParams
from .trainer import TrainConfig

OUTPUT_ROOT_ENV_VAR = "SWARMRACE_OUT_ROOT"

_REWARD_EXCLUDED = ("safe_radius", "safety_tolerance", "waypoint_radius")


def _section_fields(cls, excluded=()):
    return tuple(f.name for f in dataclasses.fields(cls) if f.name not in excluded)

ENV_FIELDS = _section_fields(EnvConfig)
REWARD_FIELDS = _section_fields(RewardParams, _REWARD_EXCLUDED)
TRAINER_FIELDS = _section_fields(TrainConfig)
TOP_LEVEL_FIELDS = ("track", "seed", "out_dir", "env", "reward", "trainer")


@dataclass
class RunConfig:
    track: str = "loop"
    seed: int = 1
    out_dir: str | None = None
    env: EnvConfig = field(default_factory=EnvConfig)
    reward: RewardParams = field(default_factory=RewardParams)
    trainer: TrainConfig = field(default_factory=TrainConfig)


def _build_section(cls, data: dict, prefix: str, allowed) -> object:
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown config key '{prefix}.{unknown[0]}'")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"bad '{prefix}' section: {exc}") from None


def run_config_from_dict(data: dict) -> RunConfig:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"config document must be a mapping, got {type(data).__name__}")
    unknown = sorted(set(data) - set(TOP_LEVEL_FIELDS))
    if unknown:
        raise ConfigError(f"unknown config key '{unknown[0]}'")
    for section in ("env", "reward", "trainer"):
        if section in data and not isinstance(data[section], dict):
            raise ConfigError(f"'{section}' section must be a mapping")
    return RunConfig(
        track=str(data.get("track", "loop")),
        seed=int(data.get("seed", 1)),
        out_dir=None if data.get("out_dir") is None else str(data["out_dir"]),
        env=_build_section(EnvConfig, data.get("env", {}), "env", ENV_FIELDS),
        reward=_build_section(RewardParams, data.get("reward", {}), "reward", REWARD_FIELDS),
        trainer=_build_section(TrainConfig, data.get("trainer", {}), "trainer", TRAINER_FIELDS),
    )


def _plain(value):
    if isinstance(value, np.ndarray):
        return [float(x) for x in value]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    return value


def run_config_to_dict(cfg: RunConfig) -> dict:
    out = {"track": cfg.track, "seed": cfg.seed, "out_dir": cfg.out_dir}
    for section, obj, names in (("env", cfg.env, ENV_FIELDS),
                                ("reward", cfg.reward, REWARD_FIELDS),
                                ("trainer", cfg.trainer, TRAINER_FIELDS)):
        out[section] = {name: _plain(getattr(obj, name)) for name in names}
    return out


def load_run_config(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from None
    return {} if data is None else data


def apply_overrides(data: dict, overrides) -> dict:
    """Apply ``section.key=value`` strings onto a nested config dict."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        dotted, raw_value = item.split("=", 1)
        keys = [k for k in dotted.strip().split(".") if k]
        if not keys:
            raise ConfigError(f"override {item!r} has an empty key")
        try:
            value = yaml.safe_load(raw_value)
        except yaml.YAMLError:
            value = raw_value
        node = data
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override '{dotted}' descends into a non-mapping")
        node[keys[-1]] = value
    return data


def resolve_run_config(path=None, overrides=(), seed=None) -> RunConfig:
    data = load_run_config(path) if path is not None else {}
    if not isinstance(data, dict):
        raise ConfigError("config document must be a mapping")
    apply_overrides(data, overrides)
    if seed is not None:
        data["seed"] = seed
    return run_config_from_dict(data)


def write_resolved_config(path, cfg: RunConfig) -> None:
    text = yaml.safe_dump(run_config_to_dict(cfg), sort_keys=False)
    Path(path).write_text(text)


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV_VAR, "runs"))
