"""Write a random bead pack as a POREVOX geometry file.

    python3 scripts/make_bead_pack.py scripts/configs/bead_pack.pvx --size 32 --radius 4 --porosity 0.45
"""
import argparse

from porevox.geometry import describe, write_geometry
from porevox.synthetic import bead_pack


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("output")
    ap.add_argument("--size", type=int, default=32)
    ap.add_argument("--radius", type=float, default=4.0)
    ap.add_argument("--porosity", type=float, default=0.45)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--keep-isolated", action="store_true", help="keep pores without an inlet-outlet path")
    args = ap.parse_args()
    grid = bead_pack(args.size, args.radius, args.porosity, args.seed, fill_isolated=not args.keep_isolated)
    write_geometry(args.output, grid)
    for k, v in describe(grid).items():
        print(f"{k}={v}")


if __name__ == "__main__":
    main()
