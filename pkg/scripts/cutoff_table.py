"""Corrected cutoffs k* on the 9x9 (w1^2, u1) grid, compared with the published table."""

import argparse
import math
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))
from reference_values import CUTOFFS, GRID  # noqa: E402

from adaptsurv.wiener_bound import kstar_table  # noqa: E402


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--alpha", type=float, default=0.025)
    ap.add_argument("--knots", type=int, default=16)
    args = ap.parse_args()

    start = time.perf_counter()
    tab = kstar_table([math.sqrt(r) for r in GRID], GRID, args.alpha, args.knots)
    print("w1^2 \\ u1 " + " ".join(f"{u:6.1f}" for u in GRID))
    for r, row in zip(GRID, tab):
        print(f"{r:9.1f} " + " ".join(f"{v:6.3f}" for v in row))
    diff = tab - CUTOFFS
    print(f"max |diff| {np.abs(diff).max():.4f}, mean diff {diff.mean():+.4f}, "
          f"{time.perf_counter() - start:.1f}s")


if __name__ == "__main__":
    main()
