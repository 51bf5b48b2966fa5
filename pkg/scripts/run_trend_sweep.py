#!/usr/bin/env python3
"""Desk-scale reconstruction-vs-dimension experiment.

Generates the default synthetic corpus, trains stage-1 models at d_z in
{2, 8, 16} with a shared seed, and prints the MCD / FFE / leakage-probe
trend table (the reconstruction counterpart of the diversity trade-off).

Usage: python scripts/run_trend_sweep.py [OUT_DIR] [--dims 2,8,16]
"""

import argparse
import sys
from pathlib import Path

from prosodyvae.cli import main as cli_main


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out", nargs="?", default="runs/trend_sweep")
    parser.add_argument("--dims", default="2,8,16")
    parser.add_argument("--seed", type=int, default=1234)
    args = parser.parse_args()

    out = Path(args.out)
    corpus_dir = out / "corpus"
    code = cli_main([
        "gen-synthetic", "--out", str(corpus_dir), "--set", f"seed={args.seed}",
    ])
    if code != 0:
        return code
    return cli_main([
        "sweep",
        "--corpus", str(corpus_dir / "manifest.tsv"),
        "--dims", args.dims,
        "--out", str(out / "sweep"),
        "--set", f"seed={args.seed}",
    ])


if __name__ == "__main__":
    sys.exit(main())
