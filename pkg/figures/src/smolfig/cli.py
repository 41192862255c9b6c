"""smolvel-render: deterministic figures from run-directory CSV files."""

from __future__ import annotations

import argparse
import sys

from .render import KINDS, FigureJob, render
from .schema import SchemaError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smolvel-render",
        description="Render solver/particle CSV outputs as PNG figures. "
                    "Byte-identical inputs yield pixel-identical images.",
    )
    parser.add_argument("--kind", required=True, choices=KINDS,
                        help="decay: one diagnostics.csv; snapshot: density "
                             "snapshot files; overlay: solver snapshots then "
                             "the matching particle snapshots; sweep: "
                             "summary.csv followed by one diagnostics.csv "
                             "per kappa row")
    parser.add_argument("--in", dest="inputs", nargs="+", required=True,
                        metavar="CSV")
    parser.add_argument("--out", required=True, metavar="PNG")
    parser.add_argument("--particles-n", type=int, default=None,
                        help="particle count for overlay sampling bands")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    options = {}
    if args.particles_n:
        options["particles_n"] = args.particles_n
    job = FigureJob(kind=args.kind, inputs=tuple(args.inputs),
                    output=args.out, options=options)
    try:
        render(job)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    print(args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
