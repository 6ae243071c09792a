"""Command line interface.

    trajviz plot track --in race.traj --out track.png [--kind 3d] [--color-by speed]
    trajviz plot training --in runs/a/metrics.csv runs/b/metrics.csv --out curves.png

Exit codes: 0 on success, 1 on malformed input or I/O failure, 2 on bad
arguments (argparse). The tool never writes anything except the requested
image.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import ParseError
from .metrics_format import parse_metrics_file
from .plots import COLOR_MODES, TRACK_KINDS, plot_track, plot_training, save
from .traj_format import parse_trajectory_file


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trajviz",
                                     description="Plot swarmrace output files.")
    commands = parser.add_subparsers(dest="command", required=True)
    plot = commands.add_parser("plot", help="render an image from run artifacts")
    kinds = plot.add_subparsers(dest="what", required=True)

    track = kinds.add_parser("track", help="drone paths over the track layout")
    track.add_argument("--in", dest="inputs", nargs="+", required=True,
                       metavar="TRAJ", help="trajectory file(s)")
    track.add_argument("--out", required=True, help="output image path")
    track.add_argument("--kind", choices=TRACK_KINDS, default="3d")
    track.add_argument("--color-by", choices=COLOR_MODES, default="drone")

    training = kinds.add_parser("training", help="training curves from metrics logs")
    training.add_argument("--in", dest="inputs", nargs="+", required=True,
                          metavar="CSV", help="metrics log(s)")
    training.add_argument("--out", required=True, help="output image path")
    return parser


def _cmd_track(args) -> int:
    datas = [parse_trajectory_file(p) for p in args.inputs]
    labels = [Path(p).stem for p in args.inputs]
    fig = plot_track(datas, kind=args.kind, color_by=args.color_by, labels=labels)
    save(fig, args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_training(args) -> int:
    logs = [parse_metrics_file(p) for p in args.inputs]
    fig = plot_training(logs)
    save(fig, args.out)
    print(f"wrote {args.out}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.what == "track":
            return _cmd_track(args)
        return _cmd_training(args)
    except ParseError as exc:
        print(f"error: {exc.location()}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
