"""Machine-independent cost of the two Poisson orderings on the modified OU
drift for growing M: mean Poisson points examined per proposal, plus wall
time (informational only)."""

import csv
import sys
import time

from exactsde.analysis import variant_cost_report
from exactsde.drift import make_modified_ou

from _common import parser


def main() -> None:
    args = parser(__doc__, 10**5).parse_args()
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["M", "variant", "accept_rate", "mean_points_examined", "mean_points_per_rejection",
                "mean_reveals", "ratio_time_over_ordinate", "wall_seconds"])
    for M in (1.0, 10.0, 100.0):
        t0 = time.perf_counter()
        rows = variant_cost_report(make_modified_ou(M), 0.0, 1.0, n=args.paths, seed=args.seed, workers=args.workers)
        secs = time.perf_counter() - t0
        ratio = rows[0].mean_points_examined / rows[1].mean_points_examined
        for r in rows:
            w.writerow([M, r.variant, f"{r.accept_rate:.6g}", f"{r.mean_points_examined:.6g}",
                        f"{r.mean_points_per_rejection:.6g}", f"{r.mean_reveals:.6g}", f"{ratio:.4g}", f"{secs:.2f}"])


if __name__ == "__main__":
    main()
