#!/usr/bin/env python3
"""Recompute the interpolation constants frozen in thinfilm.holder.

Prints the maximum ratio per inequality over the smooth corpus, times the
safety factor, next to the frozen value.
"""

import argparse

from thinfilm.holder import CALIBRATED_CONSTANTS, PairPlan, calibrate


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--gamma", type=float, default=0.25)
    ap.add_argument("--epsilon", type=float, default=0.1)
    ap.add_argument("--n", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--pairs", type=int, default=100_000)
    ap.add_argument("--safety", type=float, default=1.5)
    a = ap.parse_args()
    fresh = calibrate(a.gamma, a.epsilon, a.n, a.seed, PairPlan(a.pairs, a.seed), a.safety)
    for k in sorted(fresh):
        print(f"{k:6s} fresh={fresh[k]:8.2f} frozen={CALIBRATED_CONSTANTS[k]:8.2f}")


if __name__ == "__main__":
    main()
