"""Command-line entry point: train, eval, and inspect subcommands."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .checkpoint import load_checkpoint
from .config import (
    OUTPUT_ROOT_ENV_VAR,
    output_root,
    resolve_run_config,
    write_resolved_config,
)
from .env import EGO_SIZE, NEIGHBOR_SIZE, EnvConfig
from .errors import (
    CheckpointError,
    ConfigError,
    InvalidStateError,
    TrainingDiverged,
    TrajectoryFormatError,
)
from .evaluation import evaluate, export_trajectory, format_summary, write_trial_records
from .track import load_track
from .trainer import train


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swarmrace",
        description="Multi-drone waypoint racing: training, evaluation, inspection.",
        epilog=f"Output directories default under ${OUTPUT_ROOT_ENV_VAR} (or ./runs).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run a training loop from a config file")
    p_train.add_argument("--config", help="YAML run config; omit to use all defaults")
    p_train.add_argument("--set", dest="overrides", action="append", default=[],
                         metavar="KEY=VALUE",
                         help="override a config entry, e.g. trainer.gamma=0.99")
    p_train.add_argument("--workers", type=int, default=1,
                         help="process cap; rollouts are vectorized in-process, "
                              "so 1 keeps runs bit-reproducible")
    p_train.add_argument("--seed", type=int, default=None,
                         help="overrides the config seed")

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint over noisy trials")
    p_eval.add_argument("--ckpt", required=True)
    p_eval.add_argument("--track", required=True,
                        help="builtin track name or path to a track file")
    p_eval.add_argument("--trials", type=int, required=True)
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--export-trajectories", type=int, default=0, metavar="K",
                        help="record and write the first K trial trajectories")
    p_eval.add_argument("--workers", type=int, default=1)
    p_eval.add_argument("--out", default=None, help="output directory")
    p_eval.add_argument("--t-max", type=int, default=None,
                        help="per-episode step limit (default: env default)")

    p_inspect = sub.add_parser("inspect", help="print checkpoint metadata")
    p_inspect.add_argument("--ckpt", required=True)
    return parser


def _cmd_train(args) -> int:
    if args.workers < 1:
        raise ConfigError("--workers must be >= 1")
    cfg = resolve_run_config(args.config, args.overrides, seed=args.seed)
    track = load_track(cfg.track)
    if args.workers != 1:
        print("note: rollouts run vectorized in one process; --workers left at "
              f"{args.workers} has no effect on results")
    if cfg.out_dir is not None:
        out_dir = Path(cfg.out_dir)
    else:
        stem = Path(args.config).stem if args.config else "default"
        out_dir = output_root() / f"{stem}_s{cfg.seed}"
    out_dir.mkdir(parents=True, exist_ok=True)
    write_resolved_config(out_dir / "config.yaml", cfg)
    result = train(track, cfg.env, cfg.trainer, cfg.seed, out_dir,
                   reward_params=cfg.reward)
    print(f"finished: {len(result.metrics)} updates, "
          f"checkpoint at {result.checkpoint_path}")
    return 0


def _expected_obs_length(n_drones: int, lookahead: int) -> int:
    return 3 * lookahead + EGO_SIZE + NEIGHBOR_SIZE * (n_drones - 1)


def _cmd_eval(args) -> int:
    if args.trials < 1:
        raise ConfigError("--trials must be >= 1")
    if args.export_trajectories < 0:
        raise ConfigError("--export-trajectories cannot be negative")
    if args.export_trajectories > args.trials:
        raise ConfigError("cannot export more trajectories than trials")
    if args.workers < 1:
        raise ConfigError("--workers must be >= 1")

    ck = load_checkpoint(args.ckpt)
    expected = _expected_obs_length(ck.n_drones, ck.lookahead)
    if ck.obs_len != expected:
        raise CheckpointError(
            f"checkpoint is inconsistent: {ck.n_drones} drone(s) with lookahead "
            f"{ck.lookahead} imply observation length {expected}, "
            f"but the networks take {ck.obs_len}"
        )
    track = load_track(args.track)
    env_kwargs = {"n_drones": ck.n_drones, "lookahead": ck.lookahead}
    if args.t_max is not None:
        env_kwargs["t_max"] = args.t_max
    env_cfg = EnvConfig(**env_kwargs)

    summary, results = evaluate(
        ck, track, env_cfg, args.trials, args.seed,
        record_trajectories=args.export_trajectories, workers=args.workers,
    )

    if args.out is not None:
        out_dir = Path(args.out)
    else:
        out_dir = output_root() / (
            f"eval_{Path(args.ckpt).stem}_{Path(args.track).stem}_s{args.seed}"
        )
    out_dir.mkdir(parents=True, exist_ok=True)
    text = format_summary(summary)
    (out_dir / "summary.txt").write_text(text)
    write_trial_records(out_dir / "trials.csv", results)
    for k in range(args.export_trajectories):
        export_trajectory(results[k], out_dir / f"trajectory_{k:03d}.traj")
    print(text, end="")
    print(f"written: {out_dir}")
    return 0


def _cmd_inspect(args) -> int:
    ck = load_checkpoint(args.ckpt)
    actor = [ck.arrays[f"actor.w{k}"].shape for k in range(3)]
    critic = [ck.arrays[f"critic.w{k}"].shape for k in range(3)]
    fmt = "x".join
    print(f"checkpoint: {args.ckpt}")
    print(f"observation length: {ck.obs_len}")
    print(f"drones (N): {ck.n_drones}")
    print(f"waypoint lookahead (W): {ck.lookahead}")
    print(f"actor layers: {', '.join(fmt(map(str, s)) for s in actor)}")
    print(f"critic layers: {', '.join(fmt(map(str, s)) for s in critic)}")
    print(f"action log-spread: {ck.arrays['log_spread'].tolist()}")
    print(f"value normalization: mean={ck.value_mean} std={ck.value_std} "
          f"count={ck.value_count}")
    print(f"global step: {ck.global_step}")
    return 0


_COMMANDS = {"train": _cmd_train, "eval": _cmd_eval, "inspect": _cmd_inspect}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, CheckpointError, TrajectoryFormatError,
            InvalidStateError, TrainingDiverged) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
