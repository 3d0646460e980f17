"""Proposal bridge: biased endpoint, pathwise minimum, lazy interior revelation.

Conditionally on its minimum ``m`` reached at ``t_m``, the bridge splits into
two Bessel(3) bridges hanging off ``(t_m, m)``. Each is stored as the modulus
of a 3-component Brownian bridge pinned at the zero vector at ``t_m`` and at
``(end - m, 0, 0)`` at the segment end, so inserting a time between two
stored ones is a componentwise Gaussian bridge draw.

Kernel storage for one skeleton:

* ``hdr = [x, y_T, T, m, t_m]``
* ``sk``, a ``(capacity, 4)`` array of rows ``(t, v1, v2, v3)`` sorted by t
* ``cnt[0]`` the number of rows in use, ``cnt[1]`` interior reveals so far
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np
from numba import njit

from .drift import DriftModel, k_antiderivative
from .randomness import (
    DomainError,
    EnvelopeIntegrityError,
    RngStream,
    exponential,
    inverse_gaussian,
    standard_normal,
    uniform,
)

SNAP = 1e-12
ENVELOPE_BREACH = -1


@njit(cache=True)
def k_sample_endpoint(kind, mv, env, st, max_tries):
    """Rejection draw from ``exp(A(t) - (t - x)^2 / 2T)``; returns (value, proposals).

    ``proposals`` is ``ENVELOPE_BREACH`` if the envelope was caught not dominating.
    """
    mean, sd, q2, q1, q0 = env[0], env[1], env[2], env[3], env[4]
    for k in range(1, max_tries + 1):
        y = mean + sd * standard_normal(st)
        lr = k_antiderivative(kind, mv, y) - (q2 * y * y + q1 * y + q0)
        if lr > 1e-12:
            return y, ENVELOPE_BREACH
        if math.log(1.0 - uniform(st)) < lr:
            return y, k
    return math.nan, 0


@njit(cache=True)
def k_sample_minimum(x, y, T, st):
    """Minimum and its time for a Brownian bridge from x (t=0) to y (t=T)."""
    a = y - x
    e = 0.0
    while e == 0.0:
        e = exponential(st, 1.0)
    b = 0.5 * (a - math.sqrt(a * a + 2.0 * T * e))
    c1 = (a - b) * (a - b) / (2.0 * T)
    c2 = b * b / (2.0 * T)
    r = math.sqrt(c1 / c2)
    if uniform(st) < 1.0 / (1.0 + r):
        v = inverse_gaussian(st, r, 2.0 * c1)
    else:
        v = 1.0 / inverse_gaussian(st, 1.0 / r, 2.0 * c2)
    return x + b, T / (1.0 + v)


@njit(cache=True)
def k_init(sk, cnt, hdr, x, y, T, m, tm):
    hdr[0] = x
    hdr[1] = y
    hdr[2] = T
    hdr[3] = m
    hdr[4] = tm
    sk[0, 0] = 0.0
    sk[0, 1] = x - m
    sk[0, 2] = 0.0
    sk[0, 3] = 0.0
    sk[1, 0] = tm
    sk[1, 1] = 0.0
    sk[1, 2] = 0.0
    sk[1, 3] = 0.0
    sk[2, 0] = T
    sk[2, 1] = y - m
    sk[2, 2] = 0.0
    sk[2, 3] = 0.0
    cnt[0] = 3
    cnt[1] = 0


@njit(cache=True)
def k_grow(sk, cnt, extra):
    """Return ``sk`` or a larger copy so that ``extra`` more rows fit."""
    need = cnt[0] + extra
    if need <= sk.shape[0]:
        return sk
    cap = sk.shape[0]
    while cap < need:
        cap *= 2
    out = np.empty((cap, 4))
    out[: cnt[0]] = sk[: cnt[0]]
    return out


@njit(cache=True)
def k_row_value(sk, hdr, i):
    return hdr[3] + math.sqrt(sk[i, 1] * sk[i, 1] + sk[i, 2] * sk[i, 2] + sk[i, 3] * sk[i, 3])


@njit(cache=True)
def k_reveal(sk, cnt, hdr, t, st):
    """Bridge value at t given everything stored; the caller guarantees one free row."""
    if t <= 0.0:
        return hdr[0]
    if t >= hdr[2]:
        return hdr[1]
    n = cnt[0]
    lo = 0
    hi = n - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if sk[mid, 0] <= t:
            lo = mid
        else:
            hi = mid
    if t - sk[lo, 0] < SNAP:
        return hdr[0] if lo == 0 else k_row_value(sk, hdr, lo)
    if sk[hi, 0] - t < SNAP:
        return hdr[1] if hi == n - 1 else k_row_value(sk, hdr, hi)
    t0 = sk[lo, 0]
    t1 = sk[hi, 0]
    w = (t - t0) / (t1 - t0)
    sd = math.sqrt((t - t0) * (t1 - t) / (t1 - t0))
    for j in range(n - 1, hi - 1, -1):
        sk[j + 1, 0] = sk[j, 0]
        sk[j + 1, 1] = sk[j, 1]
        sk[j + 1, 2] = sk[j, 2]
        sk[j + 1, 3] = sk[j, 3]
    sk[hi, 0] = t
    for c in range(1, 4):
        sk[hi, c] = sk[lo, c] + w * (sk[hi + 1, c] - sk[lo, c]) + sd * standard_normal(st)
    cnt[0] = n + 1
    cnt[1] += 1
    return k_row_value(sk, hdr, hi)


def _envelope_array(model: DriftModel, x: float, T: float) -> np.ndarray:
    return model.envelope(x, T).as_array()


def sample_endpoint(model: DriftModel, x: float, T: float, s: RngStream, env: np.ndarray | None = None) -> tuple[float, int]:
    """Exact draw of the biased bridge endpoint; returns (value, proposals)."""
    if env is None:
        env = _envelope_array(model, x, T)
    y, k = k_sample_endpoint(model.kind, model.packed, env, s.state, 10**7)
    if k == ENVELOPE_BREACH:
        raise EnvelopeIntegrityError(f"endpoint envelope violated at {y} for {model.name}")
    if k == 0:
        raise RuntimeError("endpoint sampler exceeded its proposal budget")
    return y, k


def sample_minimum(x: float, y_T: float, T: float, s: RngStream) -> tuple[float, float]:
    if not T > 0:
        raise DomainError("horizon must be positive")
    return k_sample_minimum(float(x), float(y_T), float(T), s.state)


class BridgeSkeleton:
    """A partially revealed bridge from ``x`` to ``y_T`` with known minimum."""

    def __init__(self, x: float, y_T: float, T: float, m: float, t_m: float, capacity: int = 64):
        if not T > 0:
            raise DomainError("horizon must be positive")
        if not (m <= min(x, y_T) and 0.0 < t_m < T):
            raise DomainError("minimum must lie below both ends and be reached inside (0, T)")
        self.hdr = np.empty(5)
        self.cnt = np.zeros(2, dtype=np.int64)
        self.sk = np.empty((max(capacity, 8), 4))
        k_init(self.sk, self.cnt, self.hdr, float(x), float(y_T), float(T), float(m), float(t_m))

    @classmethod
    def from_arrays(cls, sk: np.ndarray, cnt: np.ndarray, hdr: np.ndarray) -> "BridgeSkeleton":
        obj = cls.__new__(cls)
        obj.sk, obj.cnt, obj.hdr = sk, cnt, hdr
        return obj

    @classmethod
    def propose(cls, model: DriftModel, x: float, T: float, s: RngStream) -> "BridgeSkeleton":
        """Fresh proposal: endpoint from the biased law, then the minimum."""
        y, _ = sample_endpoint(model, x, T, s)
        m, t_m = sample_minimum(x, y, T, s)
        return cls(x, y, T, m, t_m)

    x = property(lambda self: float(self.hdr[0]))
    y_T = property(lambda self: float(self.hdr[1]))
    T = property(lambda self: float(self.hdr[2]))
    m = property(lambda self: float(self.hdr[3]))
    t_m = property(lambda self: float(self.hdr[4]))

    def __len__(self) -> int:
        return int(self.cnt[0])

    def reveal_at(self, t: float, s: RngStream) -> float:
        if not 0.0 < t < self.T:
            raise DomainError(f"reveal time {t} outside (0, {self.T})")
        self.sk = k_grow(self.sk, self.cnt, 1)
        return k_reveal(self.sk, self.cnt, self.hdr, float(t), s.state)

    def times(self) -> np.ndarray:
        return self.sk[: self.cnt[0], 0].copy()

    def values(self) -> np.ndarray:
        n = int(self.cnt[0])
        vals = self.m + np.sqrt(np.sum(self.sk[:n, 1:] ** 2, axis=1))
        vals[0], vals[-1] = self.x, self.y_T
        return vals

    def aux3(self) -> np.ndarray:
        return self.sk[: self.cnt[0], 1:].copy()

    def dump_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "value"])
            for t, v in zip(self.times(), self.values()):
                w.writerow([f"{t:.9g}", f"{v:.9g}"])
