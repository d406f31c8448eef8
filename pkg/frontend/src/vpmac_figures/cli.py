"""Per-figure command line wrapper around :func:`vpmac_figures.render.render`."""

from __future__ import annotations

import argparse
import json
import sys

from .render import KINDS, FigureJob, RenderError, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="vpmac-figures",
        description="Render one figure from a simulator CSV and its metadata",
    )
    parser.add_argument("--csv", required=True, nargs="+", help="input CSV path(s)")
    parser.add_argument("--meta", required=True, help="metadata JSON path")
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument(
        "--kind", choices=KINDS, default=None, help="figure kind (default: inferred)"
    )
    args = parser.parse_args(argv)
    try:
        echo = render(
            FigureJob(
                csv_paths=tuple(args.csv),
                meta_path=args.meta,
                output_path=args.out,
                kind=args.kind,
            )
        )
    except (RenderError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(echo, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
