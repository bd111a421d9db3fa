#!/usr/bin/env python3
"""Run one benchmark example end to end: optimize a design load, save the run
artifacts, then sweep the service loads into an efficacy table row.

Example:
    python scripts/run_benchmark.py --example 1 --load XT --mesh-h 0.2 --out runs/ex1_xt
"""

import argparse
import sys

from cloakopt import cli


def main() -> int:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--example", type=int, default=1, choices=(1, 2, 3, 4))
    p.add_argument("--load", default="XT")
    p.add_argument("--mesh-h", type=float, default=0.2, dest="mesh_h")
    p.add_argument("--out", default="runs/benchmark")
    p.add_argument("--k-target", type=float, default=1e7, dest="k_target")
    p.add_argument("--seed", type=int, default=None)
    args = p.parse_args()

    import tempfile, os

    with tempfile.NamedTemporaryFile("w", suffix=".cfg", delete=False) as f:
        f.write(f"geometry.target_h = {args.mesh_h}\n")
        f.write(f"solver.k_target = {args.k_target}\n")
        cfg = f.name
    try:
        argv = ["optimize", "--example", str(args.example), "--load", args.load,
                "--config", cfg, "--out", args.out, "--force"]
        if args.seed is not None:
            argv += ["--seed", str(args.seed)]
        code = cli.main(argv)
        if code != 0:
            return code
        return cli.main([
            "evaluate", "--example", str(args.example),
            "--mesh", f"{args.out}/mesh.txt", "--design", f"{args.out}/design.txt",
            "--config", cfg, "--out", args.out,
        ])
    finally:
        os.unlink(cfg)


if __name__ == "__main__":
    sys.exit(main())
