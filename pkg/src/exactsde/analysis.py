"""Truncation diagnostics: acceptance probabilities, bridge-sup tails, bias
bounds for the truncated algorithm, and cost proxies for the two Poisson
orderings.

Proposal ``j`` is always drawn from the stream ``(seed, j)``. Under the
increasing-ordinate ordering the Poisson points below a cap are a prefix of
the points below any larger cap, so acceptance estimates at different levels
from one seed are nested: ``p_K`` is non-increasing in ``K`` path by path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from .bridge import ENVELOPE_BREACH, k_init, k_reveal, k_sample_endpoint, k_sample_minimum
from .drift import CIR_LAMPERTI, DriftModel, k_phi_tilde
from .estimators import PayoffSpec, set_workers
from .randomness import EnvelopeIntegrityError, seed_state
from .sampler import SKELETON_CAPACITY, PoissonVariant, TruncationPolicy, k_try_accept

SUP_GRID = 4096
REFERENCE_K = 100.0


@njit(cache=True)
def k_one_proposal(kind, mv, env, x, T, variant, kbase, st, out):
    """Draw one proposal and test it; ``out = [accepted, points, reveals, y]``."""
    sk = np.empty((SKELETON_CAPACITY, 4))
    cnt = np.zeros(2, dtype=np.int64)
    hdr = np.empty(5)
    counters = np.zeros(4, dtype=np.int64)
    y, k = k_sample_endpoint(kind, mv, env, st, 100_000_000)
    if k == ENVELOPE_BREACH or k == 0:
        return False
    m, tm = k_sample_minimum(x, y, T, st)
    k_init(sk, cnt, hdr, x, y, T, m, tm)
    ok, sk = k_try_accept(kind, mv, variant, kbase, sk, cnt, hdr, st, counters)
    out[0] = 1.0 if ok else 0.0
    out[1] = counters[0]
    out[2] = cnt[1]
    out[3] = y
    return True


@njit(cache=True, parallel=True)
def k_proposal_batch(kind, mv, env, x, T, variant, kbase, seed, start, out, good):
    for j in prange(out.shape[0]):
        st = np.empty(4, dtype=np.uint64)
        seed_state(st, seed, np.uint64(start + j))
        good[j] = k_one_proposal(kind, mv, env, x, T, variant, kbase, st, out[j])


@njit(cache=True)
def k_bridge_sup(kind, mv, env, x, T, grid, st, out):
    """Endpoint and ``max phi~`` over a uniform grid plus both ends and the minimum."""
    y, k = k_sample_endpoint(kind, mv, env, st, 100_000_000)
    if k == ENVELOPE_BREACH or k == 0:
        return False
    m, tm = k_sample_minimum(x, y, T, st)
    sk = np.empty((grid + 4, 4))
    cnt = np.zeros(2, dtype=np.int64)
    hdr = np.empty(5)
    k_init(sk, cnt, hdr, x, y, T, m, tm)
    top = max(k_phi_tilde(kind, mv, x), k_phi_tilde(kind, mv, y), k_phi_tilde(kind, mv, m))
    # increasing times keep every insertion next to the end of the table
    for i in range(1, grid + 1):
        v = k_reveal(sk, cnt, hdr, T * i / (grid + 1), st)
        top = max(top, k_phi_tilde(kind, mv, v))
    out[0] = y
    out[1] = top
    return True


@njit(cache=True, parallel=True)
def k_sup_batch(kind, mv, env, x, T, grid, seed, start, out, good):
    for j in prange(out.shape[0]):
        st = np.empty(4, dtype=np.uint64)
        seed_state(st, seed, np.uint64(start + j))
        good[j] = k_bridge_sup(kind, mv, env, x, T, grid, st, out[j])


def _seed(seed: int) -> np.uint64:
    return np.uint64(int(seed) & ((1 << 64) - 1))


def proposal_outcomes(
    model: DriftModel,
    x: float,
    T: float,
    K: float,
    n: int,
    seed: int = 0,
    variant: PoissonVariant = PoissonVariant.INCREASING_ORDINATE,
    workers: int | None = None,
) -> np.ndarray:
    """Per-proposal ``[accepted, points examined, reveals, endpoint]`` rows."""
    set_workers(workers)
    env = model.envelope(x, T).as_array()
    out = np.empty((n, 4))
    good = np.empty(n, dtype=np.bool_)
    k_proposal_batch(model.kind, model.packed, env, float(x), float(T), int(variant), float(K),
                     _seed(seed), 0, out, good)
    if not good.all():
        raise EnvelopeIntegrityError(f"endpoint envelope failed for {model.name}")
    return out


def estimate_pk(
    model: DriftModel,
    x: float,
    T: float,
    K: float,
    n: int,
    seed: int = 0,
    variant: PoissonVariant = PoissonVariant.INCREASING_ORDINATE,
    workers: int | None = None,
) -> float:
    """Acceptance frequency of the algorithm truncated at level ``K``."""
    if n < 1000:
        raise ValueError("n must be >= 1000")
    return float(proposal_outcomes(model, x, T, K, n, seed, variant, workers)[:, 0].mean())


def bridge_sup_samples(
    model: DriftModel, x: float, T: float, n: int, seed: int = 0, grid: int = SUP_GRID, workers: int | None = None
) -> np.ndarray:
    """Rows ``[endpoint, sup phi~]`` for ``n`` proposal bridges (grid approximation of the sup)."""
    set_workers(workers)
    env = model.envelope(x, T).as_array()
    out = np.empty((n, 2))
    good = np.empty(n, dtype=np.bool_)
    k_sup_batch(model.kind, model.packed, env, float(x), float(T), int(grid), _seed(seed), 0, out, good)
    if not good.all():
        raise EnvelopeIntegrityError(f"endpoint envelope failed for {model.name}")
    return out


def estimate_sup_tail(model: DriftModel, x: float, T: float, K: float, n: int, seed: int = 0,
                      workers: int | None = None, grid: int = SUP_GRID) -> float:
    """Approximate ``P(sup_t phi~(B_t) > K)`` under the proposal law."""
    if n < 1000:
        raise ValueError("n must be >= 1000")
    sups = bridge_sup_samples(model, x, T, n, seed, grid, workers)[:, 1]
    return float(np.mean(sups > K))


@dataclass
class BiasBoundReport:
    K: float
    p_K_hat: float
    p_inf_hat: float
    tail_hat: float
    tail_se: float
    psi_second_moment: float
    bound_general: float
    bound_bounded: float
    heuristic: bool = False


def bias_bound(
    model: DriftModel,
    x: float,
    T: float,
    K: float,
    payoff: PayoffSpec,
    n: int,
    seed: int = 0,
    workers: int | None = None,
    grid: int = SUP_GRID,
) -> BiasBoundReport:
    """Plug-in evaluation of both truncation-error bounds at level ``K``.

    ``p_inf`` is estimated by the acceptance frequency at the exact cap when
    the model has one, otherwise at ``max(K, 100)`` on the same proposals,
    so that ``p_inf_hat <= p_K_hat`` holds exactly.
    """
    if n < 1000:
        raise ValueError("n must be >= 1000")
    p_k = estimate_pk(model, x, T, K, n, seed, workers=workers)
    ref = math.inf if model.has_exact_cap() else max(K, REFERENCE_K)
    p_inf = min(p_k, estimate_pk(model, x, T, ref, n, seed, workers=workers))
    rows = bridge_sup_samples(model, x, T, n, seed, grid, workers)
    exceed = rows[:, 1] > K
    tail = float(exceed.mean())
    psi2 = float(np.mean(payoff(rows[:, 0]) ** 2))
    if p_k > 0 and p_inf > 0:
        general = math.sqrt(psi2) * (tail / (p_k * math.sqrt(p_inf)) + math.sqrt(tail) / p_k)
    else:
        general = math.inf
    sup = payoff.sup_norm()
    if tail == 0.0:
        bounded = 0.0
    else:
        bounded = 2.0 * sup * tail / p_k if p_k > 0 else math.inf
    return BiasBoundReport(
        K=float(K),
        p_K_hat=p_k,
        p_inf_hat=p_inf,
        tail_hat=tail,
        tail_se=math.sqrt(tail * (1.0 - tail) / n),
        psi_second_moment=psi2,
        bound_general=general,
        bound_bounded=bounded,
        heuristic=model.kind == CIR_LAMPERTI,
    )


@dataclass
class VariantCost:
    variant: str
    accept_rate: float
    mean_points_examined: float
    mean_points_per_rejection: float
    mean_reveals: float
    n: int


def variant_cost_report(
    model: DriftModel,
    x: float,
    T: float,
    variants=(PoissonVariant.INCREASING_TIME, PoissonVariant.INCREASING_ORDINATE),
    n: int = 10**5,
    seed: int = 0,
    policy: TruncationPolicy = TruncationPolicy(),
    workers: int | None = None,
) -> list[VariantCost]:
    """Machine-independent cost per proposal for each Poisson ordering."""
    if n < 1000:
        raise ValueError("n must be >= 1000")
    policy.check(model)
    rows = []
    for v in variants:
        v = PoissonVariant(v)
        out = proposal_outcomes(model, x, T, policy.base_threshold, n, seed, v, workers)
        rej = out[:, 0] == 0.0
        rows.append(
            VariantCost(
                variant="time" if v == PoissonVariant.INCREASING_TIME else "ordinate",
                accept_rate=float(out[:, 0].mean()),
                mean_points_examined=float(out[:, 1].mean()),
                mean_points_per_rejection=float(out[rej, 1].mean()) if rej.any() else 0.0,
                mean_reveals=float(out[:, 2].mean()),
                n=n,
            )
        )
    return rows
