"""Accept/reject engine for exact (or truncated) simulation of X_T.

A proposal is a bridge skeleton. Poisson points of unit intensity on
``[0, T] x [0, cap]`` are generated one at a time, either by increasing time
or by increasing ordinate; each point reveals the bridge at its abscissa and
the proposal dies at the first point lying under ``phi~(bridge)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np
from numba import njit

from .bridge import (
    ENVELOPE_BREACH,
    BridgeSkeleton,
    k_grow,
    k_init,
    k_reveal,
    k_sample_endpoint,
    k_sample_minimum,
)
from .drift import DriftModel, ModelValidationError, k_phi_tilde, k_sup_phi_given_min
from .randomness import EnvelopeIntegrityError, RngStream, exponential, uniform

DEFAULT_BUDGET = 10**6
SKELETON_CAPACITY = 64

# kernel status codes
OK = 0
BUDGET_EXCEEDED = 1
ENVELOPE_FAILED = 2


class BudgetError(RuntimeError):
    """The rejection loop used more proposals than allowed for one path."""


class PoissonVariant(enum.IntEnum):
    INCREASING_TIME = 0
    INCREASING_ORDINATE = 1

    @classmethod
    def parse(cls, name: str) -> "PoissonVariant":
        key = name.strip().lower()
        if key in ("time", "increasing-time", "increasing_time"):
            return cls.INCREASING_TIME
        if key in ("ordinate", "increasing-ordinate", "increasing_ordinate"):
            return cls.INCREASING_ORDINATE
        raise ValueError(f"unknown Poisson variant {name!r}")


@dataclass(frozen=True)
class TruncationPolicy:
    """Base threshold K for the Poisson rectangle; ``inf`` means exact caps only.

    When the model has no finite cap given the minimum, the effective cap is
    ``max(K, phi~(y_T), phi~(m))``.
    """

    base_threshold: float = math.inf

    def __post_init__(self) -> None:
        if not self.base_threshold >= 0:
            raise ValueError("truncation threshold must be >= 0")

    @property
    def exact(self) -> bool:
        return math.isinf(self.base_threshold)

    def check(self, model: DriftModel) -> None:
        if self.exact and not model.has_exact_cap():
            raise ModelValidationError(
                f"{model.name} has no finite bound on phi given the minimum; a truncation level K is required"
            )


@njit(cache=True)
def k_cap(kind, mv, hdr, kbase):
    """Effective Poisson cap for the stored skeleton and whether it is truncated."""
    exact = k_sup_phi_given_min(kind, mv, hdr[3])
    if exact < math.inf:
        return max(0.0, exact - mv[0]), False
    return max(kbase, k_phi_tilde(kind, mv, hdr[1]), k_phi_tilde(kind, mv, hdr[3])), True


@njit(cache=True)
def k_try_accept(kind, mv, variant, kbase, sk, cnt, hdr, st, counters):
    """One acceptance test on an initialised skeleton.

    Returns (accepted, sk); ``sk`` may be a grown copy. ``counters[0]`` is
    incremented by the number of Poisson points examined.
    """
    T = hdr[2]
    cap, _ = k_cap(kind, mv, hdr, kbase)
    if cap == math.inf:
        return False, sk
    if variant == 1:
        z = 0.0
        while True:
            z += exponential(st, T)
            if z > cap:
                return True, sk
            t = uniform(st) * T
            sk = k_grow(sk, cnt, 1)
            v = k_reveal(sk, cnt, hdr, t, st)
            counters[0] += 1
            if z < k_phi_tilde(kind, mv, v):
                return False, sk
    if cap <= 0.0:
        return True, sk
    t = 0.0
    while True:
        t += exponential(st, cap)
        if t > T:
            return True, sk
        z = uniform(st) * cap
        sk = k_grow(sk, cnt, 1)
        v = k_reveal(sk, cnt, hdr, t, st)
        counters[0] += 1
        if z < k_phi_tilde(kind, mv, v):
            return False, sk


@njit(cache=True)
def k_exact_path(kind, mv, env, x, T, variant, kbase, budget, sk, cnt, hdr, st, counters):
    """Loop proposals until one is accepted.

    ``counters``: [points examined, proposals, endpoint proposals, reveals].
    Returns (status, sk).
    """
    for _ in range(budget):
        y, k = k_sample_endpoint(kind, mv, env, st, 100_000_000)
        if k == ENVELOPE_BREACH or k == 0:
            return ENVELOPE_FAILED, sk
        counters[2] += k
        m, tm = k_sample_minimum(x, y, T, st)
        k_init(sk, cnt, hdr, x, y, T, m, tm)
        counters[1] += 1
        ok, sk = k_try_accept(kind, mv, variant, kbase, sk, cnt, hdr, st, counters)
        counters[3] += cnt[1]
        if ok:
            return OK, sk
    return BUDGET_EXCEEDED, sk


# ---------------------------------------------------------------------------
# Python surface


@njit(cache=True)
def _next_ordinate_point(st, T, z):
    return z + exponential(st, T), uniform(st) * T


@njit(cache=True)
def _next_time_point(st, cap, t):
    return t + exponential(st, cap), uniform(st) * cap


def poisson_increasing_ordinate(T: float, cap: float, s: RngStream) -> Iterator[tuple[float, float]]:
    """Unit-rate Poisson points on [0,T]x[0,cap] as (t, z), z increasing."""
    if not cap >= 0:
        raise ValueError("cap must be >= 0")
    z = 0.0
    while True:
        z, t = _next_ordinate_point(s.state, T, z)
        if z > cap:
            return
        yield t, z


def poisson_increasing_time(T: float, cap: float, s: RngStream) -> Iterator[tuple[float, float]]:
    """Unit-rate Poisson points on [0,T]x[0,cap] as (t, z), t increasing."""
    if not cap >= 0:
        raise ValueError("cap must be >= 0")
    if cap == 0:
        return
    t = 0.0
    while True:
        t, z = _next_time_point(s.state, cap, t)
        if t > T:
            return
        yield t, z


@dataclass(frozen=True)
class Accepted:
    points_examined: int


@dataclass(frozen=True)
class Rejected:
    points_examined: int


@dataclass
class AcceptedPath:
    skeleton: BridgeSkeleton
    proposals_used: int
    points_revealed_total: int
    truncated: bool


def try_accept(
    model: DriftModel,
    skel: BridgeSkeleton,
    variant: PoissonVariant,
    policy: TruncationPolicy,
    s: RngStream,
) -> Accepted | Rejected:
    """Run the Poisson test on a proposal skeleton (revealing it as needed)."""
    policy.check(model)
    counters = np.zeros(4, dtype=np.int64)
    ok, skel.sk = k_try_accept(
        model.kind, model.packed, int(variant), float(policy.base_threshold),
        skel.sk, skel.cnt, skel.hdr, s.state, counters,
    )
    n = int(counters[0])
    return Accepted(n) if ok else Rejected(n)


def effective_cap(model: DriftModel, skel: BridgeSkeleton, policy: TruncationPolicy) -> tuple[float, bool]:
    cap, truncated = k_cap(model.kind, model.packed, skel.hdr, float(policy.base_threshold))
    return float(cap), bool(truncated)


def _raise_status(status: int, model: DriftModel, budget: int) -> None:
    if status == BUDGET_EXCEEDED:
        raise BudgetError(f"no accepted path for {model.name} within {budget} proposals")
    if status == ENVELOPE_FAILED:
        raise EnvelopeIntegrityError(f"endpoint envelope failed for {model.name}")


def exact_sample(
    model: DriftModel,
    x: float,
    T: float,
    variant: PoissonVariant = PoissonVariant.INCREASING_ORDINATE,
    policy: TruncationPolicy = TruncationPolicy(),
    s: RngStream | None = None,
    budget: int = DEFAULT_BUDGET,
) -> AcceptedPath:
    """Draw one accepted skeleton; its endpoint is X_T (or the truncated X_T^K)."""
    policy.check(model)
    s = s if s is not None else RngStream(0)
    env = model.envelope(x, T).as_array()
    sk = np.empty((SKELETON_CAPACITY, 4))
    cnt = np.zeros(2, dtype=np.int64)
    hdr = np.empty(5)
    counters = np.zeros(4, dtype=np.int64)
    status, sk = k_exact_path(
        model.kind, model.packed, env, float(x), float(T), int(variant),
        float(policy.base_threshold), budget, sk, cnt, hdr, s.state, counters,
    )
    _raise_status(status, model, budget)
    skel = BridgeSkeleton.from_arrays(sk, cnt, hdr)
    _, truncated = k_cap(model.kind, model.packed, hdr, float(policy.base_threshold))
    return AcceptedPath(skel, int(counters[1]), int(counters[3]), bool(truncated))
