"""Count modes per spectral region (ZeroN, D1, D2, D3) for a truncation.

    python scripts/region_census.py --d 2 --N-h 32 --Q 64
"""

import argparse
from collections import Counter

from stratbous.basis import Truncation
from stratbous.linear_core import eigen_table


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--d", type=int, default=2)
    ap.add_argument("--N-h", type=int, default=32)
    ap.add_argument("--Q", type=int, default=64)
    args = ap.parse_args()
    tr = Truncation(args.d, args.N_h, args.Q)
    for alpha in (0, 1):
        rows = eigen_table(tr, alpha)
        counts = Counter(r["region"] for r in rows)
        slowest = min((r["re_lambda_minus"] for r in rows if r["region"] != "ZeroN"), default=float("nan"))
        print(f"alpha={alpha}: {dict(sorted(counts.items()))}, slowest Re(lambda_-) = {slowest:.3e}")


if __name__ == "__main__":
    main()
