"""figures <kind> --in <csv> [--verdict <json>] --out <png/svg>"""

from __future__ import annotations

import argparse
import sys

from .render import KINDS, FigureSpec, SchemaError, render


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="figures", description=__doc__)
    parser.add_argument("kind", choices=KINDS)
    parser.add_argument("--in", dest="inputs", action="append", required=True,
                        help="input CSV (repeatable)")
    parser.add_argument("--verdict", default=None, help="verdict JSON from the scan")
    parser.add_argument("--out", required=True, help="output image path (.png or .svg)")
    parser.add_argument("--expected-slope", type=float, default=None,
                        help="reference slope when no verdict file is given")
    args = parser.parse_args(argv)
    try:
        spec = FigureSpec(
            kind=args.kind,
            inputs=args.inputs,
            output=args.out,
            verdict=args.verdict,
            expected_slope=args.expected_slope,
        )
        render(spec)
    except (SchemaError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
