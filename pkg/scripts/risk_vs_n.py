"""Risk of the exact interpolator on the adversarial design as n grows.

    python scripts/risk_vs_n.py [--reps 500] [--seed 0] [--csv FILE]

The Monte-Carlo mean should track the exact binomial value.  That value decreases to
the Poisson(1) limit exp(-1) * sum_k 1/(k k!) ~ 0.4848 and never approaches
zero, so interpolating pure noise does not become consistent with more data.
"""

import argparse
import csv
import math
import sys

from interpolab.lower_bound import (
    AdversarialDistribution,
    ConditionalMeanInterpolator,
    binomial_identity,
    mc_lower_bound_experiment,
)


def main() -> None:
    p = argparse.ArgumentParser(description="exact-interpolator risk vs sample size")
    p.add_argument("--ns", type=int, nargs="+", default=[2, 5, 10, 20, 50, 100, 200])
    p.add_argument("--reps", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv", help="also write the table to this file")
    args = p.parse_args()

    header = ["n", "exact", "mc_mean", "mc_stderr", "chain_final"]
    rows = []
    for n in args.ns:
        report = mc_lower_bound_experiment(AdversarialDistribution(n), ConditionalMeanInterpolator(),
                                           args.reps, args.seed)
        ident = binomial_identity(n)
        rows.append([n, ident.exact, report.mean_risk, report.stderr, ident.final])

    out = csv.writer(sys.stdout, lineterminator="\n")
    out.writerow(header)
    out.writerows(rows)
    limit = math.exp(-1) * math.fsum(1 / (k * math.factorial(k)) for k in range(1, 30))
    print(f"# large-n limit {limit:.6f}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)


if __name__ == "__main__":
    main()
