#!/usr/bin/env python3
"""Monte-Carlo calibration curves: mean CD vs displacement radius and star births.

Writes two CSVs: one sweeping the displacement radius e for several
constellation sizes (the distance should pass through the origin and grow
linearly), and one adding extra stars at fixed e (the distance should grow
with the number of new stars).
"""

import argparse
from pathlib import Path

from edgewatch.evaluation import cd_calibration


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="results", type=Path)
    parser.add_argument("--trials", default=100, type=int)
    parser.add_argument("--seed", default=7, type=int)
    args = parser.parse_args()
    args.out_dir.mkdir(parents=True, exist_ok=True)

    radii = [round(0.05 * k, 2) for k in range(11)]
    with open(args.out_dir / "calibration_displacement.csv", "w") as fp:
        fp.write("stars,e,mean_cd\n")
        for n in (5, 10, 15):
            for e in radii:
                mean_cd = cd_calibration(n, e, trials=args.trials, seed=args.seed)
                fp.write(f"{n},{e},{mean_cd!r}\n")
                print(f"stars={n:2d} e={e:4.2f} mean_cd={mean_cd:8.4f}")

    with open(args.out_dir / "calibration_star_birth.csv", "w") as fp:
        fp.write("stars,e,extra_stars,mean_cd\n")
        for n in (5, 10):
            for extra in (0, 1, 2, 4, 8):
                mean_cd = cd_calibration(n, 0.05, trials=args.trials, extra_stars=extra, seed=args.seed)
                fp.write(f"{n},0.05,{extra},{mean_cd!r}\n")
                print(f"stars={n:2d} extra={extra} mean_cd={mean_cd:8.4f}")

    print(f"wrote CSVs to {args.out_dir}/")


if __name__ == "__main__":
    main()
