"""Command line front end: figgen <kind> --inputs a.csv ... --out fig.png."""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from .render import KINDS, FigureSpec, SchemaError, render


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="figgen",
                                 description="render figures from ftns trajectory CSVs")
    ap.add_argument("kind", choices=KINDS)
    ap.add_argument("--inputs", nargs="+", required=True, help="input CSV files")
    ap.add_argument("--out", required=True, help="output image path")
    ap.add_argument("--labels", nargs="*", default=None, help="one legend label per input")
    ap.add_argument("--xlabel", default="time")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        spec = FigureSpec(kind=args.kind, inputs=args.inputs, output=args.out,
                          labels=args.labels if args.labels else None, xlabel=args.xlabel)
        render(spec)
    except (SchemaError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
