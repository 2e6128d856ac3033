"""Render one figure from a run directory:

    wplab-plots render <dir> --kind <k> --out <file.png> [--no-annotate]
"""

from __future__ import annotations

import argparse
import sys

from .figures import KINDS, FigureSpec, render
from .schema import SchemaError


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="wplab-plots")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("render")
    p.add_argument("directory", help="run artifact directory")
    p.add_argument("--kind", required=True, choices=KINDS)
    p.add_argument("--out", required=True, help="output PNG path")
    p.add_argument("--no-annotate", action="store_true",
                   help="omit slope annotations")
    args = parser.parse_args(argv)
    try:
        spec = FigureSpec(input_dir=args.directory, kind=args.kind,
                          output=args.out, annotate=not args.no_annotate)
        render(spec)
    except SchemaError as err:
        print(f"schema error: {err}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
