"""Similarity level between independent Gaussian layers, by (n, width).

Independent layers do not score zero: with n examples and d features the
linear CKA of two unrelated Gaussian matrices sits near d / (n + d), which
climbs towards 1 as d grows past n.  That floor is what "independent" means
in the synthetic fixtures; the tests compare against the n=200, d=64 value
printed here.

    python scripts/measure_baseline.py --trials 20
"""

import argparse
import statistics

from repsim.fixtures import random_matrix
from repsim.similarity import linear_cka, pwcca, svcca

METRICS = {"linear_cka": lambda x, y: linear_cka(x, y).value,
           "svcca": lambda x, y: svcca(x, y).value,
           "pwcca": lambda x, y: pwcca(x, y).value}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, nargs="+", default=[50, 200, 800])
    ap.add_argument("--width", type=int, nargs="+", default=[8, 64, 256])
    ap.add_argument("--trials", type=int, default=10)
    ap.add_argument("--metric", nargs="+", default=["linear_cka"], choices=sorted(METRICS))
    args = ap.parse_args()

    for metric in args.metric:
        fn = METRICS[metric]
        print(f"# {metric}: mean +- sd over {args.trials} seeds")
        print(f"{'n':>5} {'d':>5} {'mean':>8} {'sd':>8} {'d/(n+d)':>8}")
        for n in args.n:
            for d in args.width:
                vals = [fn(random_matrix(2 * t, n, d), random_matrix(2 * t + 1, n, d))
                        for t in range(args.trials)]
                print(f"{n:>5} {d:>5} {statistics.fmean(vals):8.4f} {statistics.pstdev(vals):8.4f} "
                      f"{d / (n + d):8.4f}")


if __name__ == "__main__":
    main()
