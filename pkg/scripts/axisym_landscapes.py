#!/usr/bin/env python3
"""Emit the three axisymmetric objective landscapes as CSV grids.

The uniform-proportional curve has its zero at P = 16/9 for the default
cylinder; the two-parameter surfaces show the zero locus of perfect cloaks.
"""

import argparse
import sys

from cloakopt import cli


def main() -> int:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", default="runs/axisym")
    p.add_argument("--grid", type=int, default=101)
    args = p.parse_args()
    for kind in ("uniform-p", "kappa-mu", "linear-p"):
        code = cli.main([
            "axisym", "--kind", kind, "--grid", str(args.grid),
            "--out", args.out, "--force",
        ])
        if code != 0:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
