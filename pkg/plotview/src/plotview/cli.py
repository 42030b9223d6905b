"""plotview CLI: `plotview boundary` and `plotview sweep`."""

from __future__ import annotations

import argparse
import sys

import matplotlib.pyplot as plt

from .render import SchemaError, render_boundary, render_sweep


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plotview",
        description="Render figures from exported CSV artifacts.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("boundary", help="decision grid + training scatter")
    p.add_argument("grid_csv")
    p.add_argument("points_csv")
    p.add_argument("out_image")
    p.add_argument("--title")
    p.add_argument("--fixed-style", action="store_true",
                   help="byte-deterministic output")

    p = sub.add_parser("sweep", help="accuracy vs one swept hyperparameter")
    p.add_argument("sweep_csv")
    p.add_argument("out_image")
    p.add_argument("--x", required=True, dest="x_axis",
                   choices=("eta", "epsilon", "alpha", "gamma"))
    p.add_argument("--fixed-style", action="store_true")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "boundary":
            fig = render_boundary(args.grid_csv, args.points_csv, args.out_image,
                                  fixed_style=args.fixed_style, title=args.title)
        else:
            fig = render_sweep(args.sweep_csv, args.x_axis, args.out_image,
                               fixed_style=args.fixed_style)
        plt.close(fig)
        return 0
    except SystemExit as exc:
        return int(exc.code or 0)
    except (SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main(sys.argv[1:]))
