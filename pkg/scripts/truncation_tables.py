"""Truncated algorithm on the symmetric OU drift: price/Delta/Gamma at
K = 0, 1, 2 against the K = 100 benchmark, and the acceptance rates p_K."""

import math

from exactsde.analysis import estimate_pk
from exactsde.drift import make_symmetric_ou
from exactsde.estimators import PayoffSpec, estimate_delta, estimate_gamma, estimate_price
from exactsde.sampler import TruncationPolicy

from _common import Table, parser

X0, T, M = 0.04, 1.0, 0.5
LEVELS = [100.0, 0.0, 1.0, 2.0]
PAYOFFS = [PayoffSpec("square"), PayoffSpec("exp-neg"), PayoffSpec("indicator", X0)]


class _P:
    def __init__(self, p, n):
        self.mean, self.n_paths = p, n
        self.std_error = math.sqrt(p * (1 - p) / n)


def main() -> None:
    args = parser(__doc__, 10**6).parse_args()
    model = make_symmetric_ou(M)
    out = Table(args.out)
    for pay in PAYOFFS:
        bench = {}
        for k in LEVELS:
            for q, fn in (("price", estimate_price), ("delta", estimate_delta), ("gamma", estimate_gamma)):
                r = fn(model, X0, T, pay, policy=TruncationPolicy(k), n_paths=args.paths, seed=args.seed,
                       workers=args.workers)
                ref = bench.setdefault(q, r.mean) if k == 100.0 else bench[q]
                out.add("truncated", model.name, pay.kind, q, f"K={k:g}", r, math.nan if k == 100.0 else ref)
    for k in LEVELS:
        p = estimate_pk(model, X0, T, k, args.paths, args.seed, workers=args.workers)
        out.add("p_K", model.name, "", "acceptance", f"K={k:g}", _P(p, args.paths))


if __name__ == "__main__":
    main()
