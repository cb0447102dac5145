#!/usr/bin/env python3
"""Refinement studies behind the manufactured-solution checks.

    python scripts/convergence_study.py linear
    python scripts/convergence_study.py nonlinear --M 16 32 64
"""

import argparse
import warnings

from thinfilm.suites import check_6, check_7, fitted_order


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("study", choices=("linear", "nonlinear"))
    ap.add_argument("--M", type=int, nargs="+", default=[16, 32, 64])
    a = ap.parse_args()
    warnings.simplefilter("ignore", RuntimeWarning)
    if a.study == "linear":
        r = check_6()
        for bottom, m in r.metrics.items():
            print(bottom)
            print("  space errors", " ".join(f"{e:.3e}" for e in m["space_errors"]), f"order {m['space_order']:.2f}")
            print("  time errors ", " ".join(f"{e:.3e}" for e in m["time_errors"]), f"order {m['time_order']:.2f}")
    else:
        r = check_7(tuple(a.M))
        for M, e, f in zip(a.M, r.metrics["errors"], r.metrics["factors"]):
            print(f"M={M:4d} front error {e:.3e} chord factor {f:.3f}")
        if len(a.M) > 1:
            print(f"order {-fitted_order(a.M, r.metrics['errors']):.2f}")
    print(r.line())
    return 0 if r.passed else 1


if __name__ == "__main__":
    raise SystemExit(main())
