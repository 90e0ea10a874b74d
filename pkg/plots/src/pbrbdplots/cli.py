"""Command line wrapper: pbrbd-plot <kind> --out <image> label=csv [...]"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

import matplotlib.pyplot as plt

from .render import PLOT_KINDS, PlotSpec, SchemaError, render


def parse_series(tokens) -> list:
    series = []
    for token in tokens:
        label, sep, path = token.partition("=")
        if not sep:
            # bare path: label it by its file stem
            path = token
            label = Path(token).stem
        series.append((label, Path(path)))
    return series


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="pbrbd-plot",
        description="render benchmark metrics CSVs as figures")
    parser.add_argument("kind", choices=PLOT_KINDS)
    parser.add_argument("series", nargs="+", metavar="label=csv",
                        help="input series (bare paths use the file stem)")
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument("--title", default=None)
    args = parser.parse_args(argv)

    try:
        spec = PlotSpec(inputs=parse_series(args.series), kind=args.kind,
                        out=Path(args.out), title=args.title)
        fig, info = render(spec)
        plt.close(fig)
    except (OSError, SchemaError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    if "fit" in info and not info["fit"]["degenerate"]:
        print(f"fit: slope={info['fit']['slope']!r} "
              f"intercept={info['fit']['intercept']!r} "
              f"r_squared={info['fit']['r_squared']!r}")
    print(args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
