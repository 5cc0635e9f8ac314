"""figures: render experiment CSVs to PNG panels.

Exit codes: 0 on success, 2 on usage or schema errors.
"""

from __future__ import annotations

import argparse
import sys

from .render import FAMILY_AXES, FigureSpec, SchemaError, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="figures", description="Render experiment result CSVs to static PNGs"
    )
    parser.add_argument("--csv", action="append", required=True,
                        help="input CSV (repeatable)")
    parser.add_argument("--family", required=True, choices=sorted(FAMILY_AXES),
                        help="experiment family to plot")
    parser.add_argument("--out", required=True, help="output PNG path")
    parser.add_argument("--logx", action="store_true", default=None)
    parser.add_argument("--logy", action="store_true", default=None)
    parser.add_argument("--methods", default=None,
                        help="comma-separated method filter (default: all)")
    parser.add_argument("--x", default=None, help="x column override")
    parser.add_argument("--y", default=None, help="y column override")
    parser.add_argument("--dpi", type=int, default=150)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    methods = tuple(m for m in (args.methods or "").replace(",", " ").split() if m)
    spec = FigureSpec(
        csv_paths=tuple(args.csv),
        family=args.family,
        out=args.out,
        x=args.x,
        y=args.y,
        logx=args.logx,
        logy=args.logy,
        methods=methods,
        dpi=args.dpi,
    )
    try:
        render(spec)
    except (SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
