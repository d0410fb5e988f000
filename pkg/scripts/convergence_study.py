"""Manufactured-solution convergence of the elliptic solver, with and without stratification.

    python scripts/convergence_study.py --sizes 8 16 32 --out results/convergence.csv
"""
import argparse
from pathlib import Path

from cylqg import StratificationProfile
from cylqg.diagnostics import manufactured_convergence, write_report_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[8, 16, 32])
    ap.add_argument("--h", type=float, default=1.0)
    ap.add_argument("--out", default="results/convergence.csv")
    args = ap.parse_args()

    profiles = {
        "lambda=1": StratificationProfile.constant(1.0, args.h),
        "poly-flat": StratificationProfile.poly_flat(2.0, 1.0, args.h),
    }
    rows = []
    for label, prof in profiles.items():
        for r in manufactured_convergence(sizes=tuple(args.sizes), h=args.h, profile=prof):
            rows.append((label, r.case, r.n, r.error, r.order, r.seconds))
            print(f"{label:>10s} {r.case:>22s} n={r.n:<3d} err={r.error:.3e} "
                  f"order={r.order:5.2f} solve={r.seconds:.2f}s")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_report_csv(out, ("profile", "case", "n", "error", "order", "seconds"), rows)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
