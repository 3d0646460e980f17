"""Seeded, splittable random streams and primitive samplers.

Every path of every estimator owns a stream keyed by ``(seed, path_index)``.
The generator is xoshiro256** seeded through splitmix64, written so that the
same kernels run inside numba-compiled loops and from plain Python. A stream's
state is a ``uint64[4]`` array that the kernels mutate in place.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numba import njit

_U64 = np.uint64
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1
_TWO_PI = 2.0 * math.pi
_INV_2_53 = 1.0 / 9007199254740992.0


class DomainError(ValueError):
    """A sampler was called with parameters outside its domain."""


class EnvelopeIntegrityError(RuntimeError):
    """A rejection envelope failed to dominate its target."""


@njit(cache=True, inline="always")
def _rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


@njit(cache=True)
def _splitmix(z):
    z = z + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def seed_state(st, seed, path_index):
    """Fill ``st`` (uint64[4]) from the pair (seed, path_index)."""
    h = _splitmix(np.uint64(seed))
    h = _splitmix(h ^ _splitmix(np.uint64(path_index) * _GOLDEN + np.uint64(0x632BE59BD9B4E019)))
    for i in range(4):
        h = _splitmix(h)
        st[i] = h
    if st[0] == 0 and st[1] == 0 and st[2] == 0 and st[3] == 0:
        st[0] = np.uint64(1)


@njit(cache=True)
def next_u64(st):
    result = _rotl(st[1] * np.uint64(5), 7) * np.uint64(9)
    t = st[1] << np.uint64(17)
    st[2] ^= st[0]
    st[3] ^= st[1]
    st[1] ^= st[2]
    st[0] ^= st[3]
    st[2] ^= t
    st[3] = _rotl(st[3], 45)
    return result


@njit(cache=True)
def uniform(st):
    """U[0, 1) with 53 random bits."""
    return float(next_u64(st) >> np.uint64(11)) * _INV_2_53


@njit(cache=True)
def standard_normal(st):
    u1 = 1.0 - uniform(st)
    u2 = uniform(st)
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(_TWO_PI * u2)


@njit(cache=True)
def exponential(st, rate):
    return -math.log(1.0 - uniform(st)) / rate


@njit(cache=True)
def inverse_gaussian(st, mu, lam):
    # Michael, Schucany & Haas (1976) transformation with a single root choice.
    nu = standard_normal(st)
    y = nu * nu
    muy = mu * y
    # roots multiply to mu^2; take the small one from the large one to avoid cancellation
    big = mu + mu * muy / (2.0 * lam) + mu / (2.0 * lam) * math.sqrt(4.0 * lam * muy + muy * muy)
    xr = mu * mu / big
    if uniform(st) <= mu / (mu + xr):
        return xr
    return mu * mu / xr


@njit(cache=True)
def _fill_uniform(st, out):
    for i in range(out.shape[0]):
        out[i] = uniform(st)


@njit(cache=True)
def _fill_normal(st, out, mean, sd):
    for i in range(out.shape[0]):
        out[i] = mean + sd * standard_normal(st)


@njit(cache=True)
def _fill_exponential(st, out, rate):
    for i in range(out.shape[0]):
        out[i] = exponential(st, rate)


@njit(cache=True)
def _fill_ig(st, out, mu, lam):
    for i in range(out.shape[0]):
        out[i] = inverse_gaussian(st, mu, lam)


@dataclass
class RngStream:
    """Deterministic stream for one ``(seed, path_index)`` pair.

    Two streams built from the same pair produce bit-identical draws no
    matter which worker runs them.
    """

    seed: int
    path_index: int = 0
    state: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.path_index < 0:
            raise DomainError("path_index must be non-negative")
        self.state = np.empty(4, dtype=np.uint64)
        seed_state(self.state, np.uint64(self.seed & _MASK64), np.uint64(self.path_index & _MASK64))

    def uniform(self) -> float:
        return uniform(self.state)

    def gaussian(self, mean: float = 0.0, variance: float = 1.0) -> float:
        return gaussian(self, mean, variance)

    def exponential(self, rate: float) -> float:
        return exponential_draw(self, rate)

    def inverse_gaussian(self, mu: float, lam: float) -> float:
        return inverse_gaussian_draw(self, mu, lam)

    # bulk draws, used by statistical tests and scripts
    def uniforms(self, n: int) -> np.ndarray:
        out = np.empty(n)
        _fill_uniform(self.state, out)
        return out

    def gaussians(self, n: int, mean: float = 0.0, variance: float = 1.0) -> np.ndarray:
        _check_variance(variance)
        out = np.empty(n)
        _fill_normal(self.state, out, float(mean), math.sqrt(variance))
        return out

    def exponentials(self, n: int, rate: float) -> np.ndarray:
        _check_rate(rate)
        out = np.empty(n)
        _fill_exponential(self.state, out, float(rate))
        return out

    def inverse_gaussians(self, n: int, mu: float, lam: float) -> np.ndarray:
        _check_ig(mu, lam)
        out = np.empty(n)
        _fill_ig(self.state, out, float(mu), float(lam))
        return out


def _check_variance(variance: float) -> None:
    if not variance >= 0.0:
        raise DomainError(f"variance must be >= 0, got {variance}")


def _check_rate(rate: float) -> None:
    if not rate > 0.0:
        raise DomainError(f"rate must be > 0, got {rate}")


def _check_ig(mu: float, lam: float) -> None:
    if not (mu > 0.0 and lam > 0.0):
        raise DomainError(f"inverse Gaussian needs mu > 0 and lambda > 0, got {mu}, {lam}")


def gaussian(s: RngStream, mean: float, variance: float) -> float:
    _check_variance(variance)
    if variance == 0.0:
        return float(mean)
    return mean + math.sqrt(variance) * standard_normal(s.state)


def exponential_draw(s: RngStream, rate: float) -> float:
    _check_rate(rate)
    return exponential(s.state, float(rate))


def inverse_gaussian_draw(s: RngStream, mu: float, lam: float) -> float:
    _check_ig(mu, lam)
    return inverse_gaussian(s.state, float(mu), float(lam))


@dataclass(frozen=True)
class GaussianEnvelope:
    """Gaussian proposal ``N(mean, variance)`` scaled by ``exp(log_bound)``."""

    mean: float
    variance: float
    log_bound: float = 0.0

    def logdensity(self, y: float) -> float:
        return -0.5 * (y - self.mean) ** 2 / self.variance - 0.5 * math.log(_TWO_PI * self.variance)


def rejection_sample(
    s: RngStream,
    target_logdensity: Callable[[float], float],
    envelope: GaussianEnvelope,
    max_proposals: int = 10**7,
    tol: float = 1e-12,
) -> tuple[float, int]:
    """Draw from the normalised target by classical rejection.

    The caller certifies ``target <= exp(log_bound) * envelope``. Returns the
    draw and the number of proposals used; raises
    :class:`EnvelopeIntegrityError` if a proposal shows the certificate wrong.
    """
    sd = math.sqrt(envelope.variance)
    for k in range(1, max_proposals + 1):
        y = envelope.mean + sd * standard_normal(s.state)
        log_ratio = target_logdensity(y) - envelope.logdensity(y) - envelope.log_bound
        if log_ratio > tol:
            raise EnvelopeIntegrityError(f"envelope violated at y={y}: log ratio {log_ratio}")
        if math.log(1.0 - uniform(s.state)) < log_ratio:
            return y, k
    raise RuntimeError("rejection sampler exceeded its proposal budget")
