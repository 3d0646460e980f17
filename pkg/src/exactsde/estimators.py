"""Unbiased price, Delta and Gamma estimators on accepted skeletons.

Every exponential weight ``exp(k * int_0^s alpha'(B))`` in the Greek weights is
replaced by ``exp(k s S) * 1{no Poisson point under k * beta(B) on [0, s]}``
where ``S = sup alpha'`` and ``beta = S - alpha' >= 0``. The Poisson points
are drawn on ``[0, s] x [0, k * K_hat(m)]`` with ``K_hat`` the bound on beta
given the bridge minimum, and every bridge value they need is revealed on the
same skeleton as the acceptance test used.

Path ``i`` of a run with seed ``seed`` draws its proposal from the stream
``(seed, i)`` and all Greek randomness from ``(seed ^ GREEK_SALT, i)``, so the
price, Delta and Gamma runs of one seed share their accepted paths, and a
path's value never depends on which worker computed it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np
from numba import njit, prange

from .drift import (
    DriftModel,
    ModelValidationError,
    k_alpha,
    k_alpha_prime,
    k_alpha_second,
    k_sup_neg_alpha_prime_given_min,
    make_cir_lamperti,
)
from .bridge import k_grow, k_reveal
from .randomness import seed_state, uniform, exponential
from .sampler import (
    DEFAULT_BUDGET,
    OK,
    SKELETON_CAPACITY,
    PoissonVariant,
    TruncationPolicy,
    _raise_status,
    k_exact_path,
)

GREEK_SALT = 0xD1B54A32D192ED03
CHUNK = 1 << 16

PRICE = 0
DELTA = 1
GAMMA = 2

_PAYOFF_CODES = {"identity": 0, "square": 1, "exp-neg": 2, "indicator": 3}


@dataclass(frozen=True)
class PayoffSpec:
    """Terminal payoff ``scale * psi(y)``.

    ``kind`` is one of ``identity``, ``square``, ``exp-neg`` or ``indicator``
    (``1{y > threshold}``).
    """

    kind: str = "identity"
    threshold: float = 0.0
    scale: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in _PAYOFF_CODES:
            raise ValueError(f"unknown payoff {self.kind!r}; expected one of {sorted(_PAYOFF_CODES)}")

    @classmethod
    def parse(cls, name: str, threshold: float = 0.0) -> "PayoffSpec":
        key = name.strip().lower().replace("_", "-")
        key = {"expneg": "exp-neg", "indicator-above": "indicator", "y": "identity", "y2": "square"}.get(key, key)
        return cls(key, threshold)

    @property
    def code(self) -> int:
        return _PAYOFF_CODES[self.kind]

    def packed(self, premap_eps: float = 0.0) -> np.ndarray:
        return np.array([self.code, self.threshold, self.scale, premap_eps], dtype=np.float64)

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        out = np.empty_like(y)
        _payoff_map(self.packed(), y.ravel(), out.ravel())
        return out if out.ndim else float(out)

    def sup_norm(self) -> float:
        """``sup |psi|`` (infinite for the unbounded payoffs)."""
        return abs(self.scale) if self.kind == "indicator" else math.inf


@dataclass
class EstimatorResult:
    mean: float
    std_error: float
    n_paths: int
    n_proposals: int
    accept_rate: float
    avg_points_revealed: float
    truncation_k: float
    avg_points_examined: float = 0.0
    quantity: str = "price"


# ---------------------------------------------------------------------------
# kernels


@njit(cache=True)
def k_payoff(pay, y):
    if pay[3] > 0.0:
        y = 0.25 * pay[3] * pay[3] * y * y
    code = int(pay[0])
    if code == 0:
        v = y
    elif code == 1:
        v = y * y
    elif code == 2:
        v = math.exp(-y)
    else:
        v = 1.0 if y > pay[1] else 0.0
    return pay[2] * v


@njit(cache=True)
def _payoff_map(pay, ys, out):
    for i in range(ys.shape[0]):
        out[i] = k_payoff(pay, ys[i])


@njit(cache=True)
def k_value(sk, cnt, hdr, t, st):
    sk = k_grow(sk, cnt, 1)
    return k_reveal(sk, cnt, hdr, t, st), sk


@njit(cache=True)
def k_weight(kind, mv, s, k, khat, sk, cnt, hdr, st):
    """Unbiased draw of ``exp(k * int_0^s alpha'(B))``; returns (weight, sk)."""
    S = mv[1]
    comp = math.exp(k * s * S)
    cap = k * khat
    if s <= 0.0 or cap <= 0.0:
        return comp, sk
    z = 0.0
    while True:
        z += exponential(st, s)
        if z > cap:
            return comp, sk
        t = uniform(st) * s
        sk = k_grow(sk, cnt, 1)
        v = k_reveal(sk, cnt, hdr, t, st)
        if z < k * (S - k_alpha_prime(kind, mv, v)):
            return 0.0, sk


@njit(cache=True)
def k_indicator_mean(b, s, cap, n, st):
    """Fraction of ``n`` Poisson draws on [0,s]x[0,cap] with no point under ``b``."""
    hits = 0
    for _ in range(n):
        z = 0.0
        empty = True
        while True:
            z += exponential(st, s)
            if z > cap:
                break
            uniform(st)
            if z < b:
                empty = False
                break
        if empty:
            hits += 1
    return hits / n


@njit(cache=True)
def k_delta_summand(kind, mv, x, T, khat, sk, cnt, hdr, st):
    """Delta weight (without the payoff factor) on an accepted skeleton."""
    y = hdr[1]
    u1 = uniform(st)
    u2 = uniform(st)
    b1, sk = k_value(sk, cnt, hdr, u1 * T, st)
    b12, sk = k_value(sk, cnt, hdr, u1 * u2 * T, st)
    b2, sk = k_value(sk, cnt, hdr, u2 * T, st)
    eT, sk = k_weight(kind, mv, T, 1.0, khat, sk, cnt, hdr, st)
    e1, sk = k_weight(kind, mv, u1 * T, 1.0, khat, sk, cnt, hdr, st)
    d = -x / T
    d += (y - T * k_alpha(kind, mv, b2)) / T * eT
    d -= (b1 - u1 * T * k_alpha(kind, mv, b12)) * k_alpha_prime(kind, mv, b1) * e1
    return d, sk


@njit(cache=True)
def k_gamma_summand(kind, mv, x, T, khat, sk, cnt, hdr, st):
    """Gamma weight (without the payoff factor) on an accepted skeleton."""
    y = hdr[1]
    u1 = uniform(st)
    u2 = uniform(st)
    u3 = uniform(st)
    u4 = uniform(st)
    b1, sk = k_value(sk, cnt, hdr, u1 * T, st)
    b2, sk = k_value(sk, cnt, hdr, u2 * T, st)
    b3, sk = k_value(sk, cnt, hdr, u3 * T, st)
    b4, sk = k_value(sk, cnt, hdr, u4 * T, st)
    b12, sk = k_value(sk, cnt, hdr, u1 * u2 * T, st)
    b13, sk = k_value(sk, cnt, hdr, u1 * u3 * T, st)
    b14, sk = k_value(sk, cnt, hdr, u1 * u4 * T, st)
    b24, sk = k_value(sk, cnt, hdr, u2 * u4 * T, st)

    wT3 = y - T * k_alpha(kind, mv, b3)
    wT4 = y - T * k_alpha(kind, mv, b4)
    w13 = b1 - u1 * T * k_alpha(kind, mv, b13)
    w14 = b1 - u1 * T * k_alpha(kind, mv, b14)
    w24 = b2 - u2 * T * k_alpha(kind, mv, b24)
    ap1 = k_alpha_prime(kind, mv, b1)
    ap2 = k_alpha_prime(kind, mv, b2)
    app1 = k_alpha_second(kind, mv, b1)
    app12 = k_alpha_second(kind, mv, b12)

    # one fresh indicator per exponential factor
    t1 = u1 * T
    eT_a, sk = k_weight(kind, mv, T, 1.0, khat, sk, cnt, hdr, st)
    e2T, sk = k_weight(kind, mv, T, 2.0, khat, sk, cnt, hdr, st)
    e1_a, sk = k_weight(kind, mv, t1, 1.0, khat, sk, cnt, hdr, st)
    e21_a, sk = k_weight(kind, mv, t1, 2.0, khat, sk, cnt, hdr, st)
    e21_b, sk = k_weight(kind, mv, t1, 2.0, khat, sk, cnt, hdr, st)
    e1_b, sk = k_weight(kind, mv, t1, 1.0, khat, sk, cnt, hdr, st)
    e2_b, sk = k_weight(kind, mv, u2 * T, 1.0, khat, sk, cnt, hdr, st)
    eT_c, sk = k_weight(kind, mv, T, 1.0, khat, sk, cnt, hdr, st)
    e1_c, sk = k_weight(kind, mv, t1, 1.0, khat, sk, cnt, hdr, st)
    eT_d, sk = k_weight(kind, mv, T, 1.0, khat, sk, cnt, hdr, st)
    e1_d, sk = k_weight(kind, mv, t1, 1.0, khat, sk, cnt, hdr, st)
    e1_e, sk = k_weight(kind, mv, t1, 1.0, khat, sk, cnt, hdr, st)
    e12_e, sk = k_weight(kind, mv, u1 * u2 * T, 1.0, khat, sk, cnt, hdr, st)

    T2 = T * T
    g = x * x / T2
    g -= 2.0 * x / T2 * wT3 * eT_a
    g += wT3 * wT4 * e2T / T2
    g += 2.0 * x / T * w13 * ap1 * e1_a
    g -= e21_a / T
    g += (u1 - 1.0) * w13 * app1 * e21_b
    g += w13 * ap1 * w24 * ap2 * e1_b * e2_b
    g -= 2.0 / T * wT3 * w14 * ap1 * eT_c * e1_c
    g += wT3 * (1.0 - u1) * app1 * eT_d * e1_d
    g += t1 * (u1 * u2 - 1.0) * w13 * ap1 * app12 * e1_e * e12_e
    return g, sk


@njit(cache=True)
def k_khat(kind, mv, m):
    return max(0.0, k_sup_neg_alpha_prime_given_min(kind, mv, m) + mv[1])


@njit(cache=True)
def k_path_values(mode, kind, mv, env, x, T, variant, kbase, budget, pay, st, aux, vals, stats):
    """One accepted path: ``vals = [psi, psi * delta weight, psi * gamma weight]``.

    ``stats = [proposals, points examined, acceptance reveals]``. Returns a status code.
    """
    sk = np.empty((SKELETON_CAPACITY, 4))
    cnt = np.zeros(2, dtype=np.int64)
    hdr = np.empty(5)
    counters = np.zeros(4, dtype=np.int64)
    status, sk = k_exact_path(kind, mv, env, x, T, variant, kbase, budget, sk, cnt, hdr, st, counters)
    stats[0] = counters[1]
    stats[1] = counters[0]
    stats[2] = counters[3]
    vals[0] = 0.0
    vals[1] = 0.0
    vals[2] = 0.0
    if status != OK:
        return status
    psi = k_payoff(pay, hdr[1])
    vals[0] = psi
    if mode == PRICE:
        return OK
    khat = k_khat(kind, mv, hdr[3])
    d, sk = k_delta_summand(kind, mv, x, T, khat, sk, cnt, hdr, aux)
    vals[1] = psi * d
    if mode == GAMMA:
        g, sk = k_gamma_summand(kind, mv, x, T, khat, sk, cnt, hdr, aux)
        vals[2] = psi * g
    return OK


@njit(cache=True, parallel=True)
def k_batch(mode, kind, mv, env, x, T, variant, kbase, budget, pay, seed, greek_seed, start, vals, stats, status):
    n = vals.shape[0]
    for j in prange(n):
        st = np.empty(4, dtype=np.uint64)
        aux = np.empty(4, dtype=np.uint64)
        idx = np.uint64(start + j)
        seed_state(st, seed, idx)
        seed_state(aux, greek_seed, idx)
        status[j] = k_path_values(mode, kind, mv, env, x, T, variant, kbase, budget, pay, st, aux, vals[j], stats[j])


# ---------------------------------------------------------------------------
# drivers


def set_workers(workers: int | None) -> int:
    """Clamp and apply the worker count; ``None`` keeps numba's default."""
    limit = numba.config.NUMBA_NUM_THREADS
    w = limit if workers is None else max(1, min(int(workers), limit))
    numba.set_num_threads(w)
    return w


@dataclass
class _Moments:
    """Running count/mean/M2, merged chunk by chunk in path order."""

    n: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def add(self, v: np.ndarray) -> None:
        nb = v.shape[0]
        if nb == 0:
            return
        mb = float(np.mean(v))
        m2b = float(np.sum((v - mb) ** 2))
        n = self.n + nb
        d = mb - self.mean
        self.mean += d * nb / n
        self.m2 += m2b + d * d * self.n * nb / n
        self.n = n


def _seed_pair(seed: int) -> tuple[np.uint64, np.uint64]:
    s = int(seed) & ((1 << 64) - 1)
    return np.uint64(s), np.uint64(s ^ GREEK_SALT)


def run_paths(
    model: DriftModel,
    x: float,
    T: float,
    pay: np.ndarray,
    mode: int,
    weights: tuple[float, float, float],
    variant: PoissonVariant,
    policy: TruncationPolicy,
    n_paths: int,
    seed: int,
    workers: int | None = None,
    budget: int = DEFAULT_BUDGET,
    quantity: str = "price",
    keep: bool = False,
):
    """Simulate ``n_paths`` accepted paths and reduce ``weights . vals`` per path.

    With ``keep=True`` also returns the per-path combined values.
    """
    if n_paths < 2:
        raise ValueError("n_paths must be >= 2")
    if not T > 0:
        raise ValueError("horizon must be positive")
    if not model.in_domain(x):
        raise ModelValidationError(f"initial value {x} outside the domain of {model.name}")
    policy.check(model)
    set_workers(workers)
    env = model.envelope(x, T).as_array()
    seed_u, greek_u = _seed_pair(seed)
    w = np.asarray(weights, dtype=np.float64)
    mom = _Moments()
    proposals = points = reveals = 0
    kept = [] if keep else None
    for start in range(0, n_paths, CHUNK):
        nb = min(CHUNK, n_paths - start)
        vals = np.empty((nb, 3))
        stats = np.empty((nb, 3), dtype=np.int64)
        status = np.empty(nb, dtype=np.int64)
        k_batch(mode, model.kind, model.packed, env, float(x), float(T), int(variant),
                float(policy.base_threshold), int(budget), pay, seed_u, greek_u, start, vals, stats, status)
        bad = np.flatnonzero(status != OK)
        if bad.size:
            _raise_status(int(status[bad[0]]), model, budget)
        v = vals @ w
        mom.add(v)
        proposals += int(stats[:, 0].sum())
        points += int(stats[:, 1].sum())
        reveals += int(stats[:, 2].sum())
        if keep:
            kept.append(v)
    n = mom.n
    res = EstimatorResult(
        mean=mom.mean,
        std_error=math.sqrt(mom.m2 / (n - 1) / n),
        n_paths=n,
        n_proposals=proposals,
        accept_rate=n / proposals,
        avg_points_revealed=reveals / n,
        truncation_k=float(policy.base_threshold),
        avg_points_examined=points / n,
        quantity=quantity,
    )
    if keep:
        return res, np.concatenate(kept)
    return res


def _estimate(mode, model, x, T, payoff, variant, policy, n_paths, seed, workers, budget):
    weights = [(1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)][mode]
    name = ["price", "delta", "gamma"][mode]
    return run_paths(model, x, T, payoff.packed(), mode, weights, PoissonVariant(variant), policy,
                     n_paths, seed, workers, budget, quantity=name)


def estimate_price(
    model: DriftModel,
    x: float,
    T: float,
    payoff: PayoffSpec = PayoffSpec(),
    variant: PoissonVariant = PoissonVariant.INCREASING_ORDINATE,
    policy: TruncationPolicy = TruncationPolicy(),
    n_paths: int = 10**5,
    seed: int = 0,
    workers: int | None = None,
    budget: int = DEFAULT_BUDGET,
) -> EstimatorResult:
    """Average of ``psi(X_T)`` over accepted paths."""
    return _estimate(PRICE, model, x, T, payoff, variant, policy, n_paths, seed, workers, budget)


def estimate_delta(
    model: DriftModel,
    x: float,
    T: float,
    payoff: PayoffSpec = PayoffSpec(),
    variant: PoissonVariant = PoissonVariant.INCREASING_ORDINATE,
    policy: TruncationPolicy = TruncationPolicy(),
    n_paths: int = 10**5,
    seed: int = 0,
    workers: int | None = None,
    budget: int = DEFAULT_BUDGET,
) -> EstimatorResult:
    """Unbiased estimate of ``d/dx E psi(X_T^x)``."""
    return _estimate(DELTA, model, x, T, payoff, variant, policy, n_paths, seed, workers, budget)


def estimate_gamma(
    model: DriftModel,
    x: float,
    T: float,
    payoff: PayoffSpec = PayoffSpec(),
    variant: PoissonVariant = PoissonVariant.INCREASING_ORDINATE,
    policy: TruncationPolicy = TruncationPolicy(),
    n_paths: int = 10**5,
    seed: int = 0,
    workers: int | None = None,
    budget: int = DEFAULT_BUDGET,
) -> EstimatorResult:
    """Unbiased estimate of ``d^2/dx^2 E psi(X_T^x)``."""
    return _estimate(GAMMA, model, x, T, payoff, variant, policy, n_paths, seed, workers, budget)


def cir_to_x(v: float, eps: float) -> float:
    return 2.0 * math.sqrt(v) / eps


def estimate_cir(
    kappa: float,
    v_inf: float,
    eps: float,
    v0: float,
    T: float,
    payoff: PayoffSpec = PayoffSpec(),
    which: str = "price",
    variant: PoissonVariant = PoissonVariant.INCREASING_ORDINATE,
    policy: TruncationPolicy = TruncationPolicy(20.0),
    n_paths: int = 10**5,
    seed: int = 0,
    workers: int | None = None,
    budget: int = DEFAULT_BUDGET,
) -> EstimatorResult:
    """Price or Greeks of ``E psi(V_T)`` for CIR, computed on the unit-diffusion state.

    The payoff acts on ``V = eps^2 X^2 / 4``; Greeks in ``v`` follow from the
    chain rule, combined path by path so the standard error is that of the
    combined estimator.
    """
    if not v0 > 0:
        raise ModelValidationError("v0 must be positive")
    model = make_cir_lamperti(kappa, v_inf, eps)
    x = cir_to_x(v0, eps)
    d1 = 1.0 / (eps * math.sqrt(v0))
    d2 = -1.0 / (2.0 * eps * v0 ** 1.5)
    table = {
        "price": (PRICE, (1.0, 0.0, 0.0)),
        "delta": (DELTA, (0.0, d1, 0.0)),
        "gamma": (GAMMA, (0.0, d2, d1 * d1)),
    }
    if which not in table:
        raise ValueError(f"unknown quantity {which!r}")
    mode, weights = table[which]
    return run_paths(model, x, T, payoff.packed(premap_eps=eps), mode, weights, PoissonVariant(variant),
                     policy, n_paths, seed, workers, budget, quantity=which)


def sample_endpoints(
    model: DriftModel,
    x: float,
    T: float,
    n: int,
    seed: int = 0,
    variant: PoissonVariant = PoissonVariant.INCREASING_ORDINATE,
    policy: TruncationPolicy = TruncationPolicy(),
    workers: int | None = None,
    budget: int = DEFAULT_BUDGET,
) -> np.ndarray:
    """``n`` endpoint draws, path ``i`` from stream ``(seed, i)``."""
    ident = PayoffSpec().packed()
    _, ys = run_paths(model, x, T, ident, PRICE, (1.0, 0.0, 0.0), PoissonVariant(variant), policy,
                      max(n, 2), seed, workers, budget, keep=True)
    return ys[:n]


def emptiness_frequency(b: float, s: float, cap: float, n: int, seed: int = 0) -> float:
    """Empirical ``P(no point under the constant level b)`` for a Poisson field on [0,s]x[0,cap]."""
    st = np.empty(4, dtype=np.uint64)
    seed_state(st, np.uint64(seed), np.uint64(0))
    return float(k_indicator_mean(float(b), float(s), float(cap), int(n), st))
