"""Worst-case type I error over a (w1, u1) grid (surface plot data)."""

import argparse
import csv

import numpy as np

from adaptsurv.wiener_bound import worst_case_alpha


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--alpha", type=float, default=0.025)
    ap.add_argument("--step", type=float, default=0.05)
    ap.add_argument("--knots", type=int, default=16)
    ap.add_argument("--out", default="worst_case_grid.csv")
    args = ap.parse_args()

    w1s = np.round(np.arange(args.step, 1.0, args.step), 4)
    u1s = np.round(np.arange(args.step, 1.0 + 1e-9, args.step), 4)
    with open(args.out, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(("w1", "u1", "worst_case_alpha"))
        for w1 in w1s:
            for u1 in u1s:
                out.writerow((w1, u1, f"{worst_case_alpha(w1, u1, args.alpha, args.knots):.6g}"))
    print(f"wrote {len(w1s) * len(u1s)} cells to {args.out}")


if __name__ == "__main__":
    main()
