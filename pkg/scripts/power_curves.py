"""Conditional power A-D against p2 for the two example designs."""

import argparse
import csv
import math

import numpy as np

from adaptsurv.combo_test import Weights
from adaptsurv.wiener_bound import PowerInputs, corrected_kstar, power_A, power_B, power_C, power_D

SCENARIOS = {
    "a": dict(d1_t1=170, d1_tmax=190, d12=248),
    "b": dict(d1_t1=147, d1_tmax=288, d12=248),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--alpha", type=float, default=0.025)
    ap.add_argument("--theta-r", type=float, default=0.36)
    ap.add_argument("--prefix", default="power")
    args = ap.parse_args()

    grid = np.round(np.arange(1, 100) / 100, 2)
    for name, s in SCENARIOS.items():
        w1 = math.sqrt(s["d1_t1"] / s["d12"])
        k = corrected_kstar(w1, s["d1_t1"] / s["d1_tmax"], args.alpha)
        pi = PowerInputs(Weights.from_w1(w1), s["d1_t1"], s["d1_tmax"], args.theta_r, args.alpha, k)
        path = f"{args.prefix}_{name}.csv"
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(("p2", "A", "B", "C", "D"))
            for p2 in grid:
                out.writerow((p2, *(f"{f(pi, p2):.6g}" for f in (power_A, power_B, power_C, power_D))))
        print(f"scenario {name}: w1={w1:.4f} u1={pi.u1:.4f} k*={k:.4f} -> {path}")


if __name__ == "__main__":
    main()
