"""Drift models for ``dX = alpha(X) dt + dW`` and everything derived from them.

A :class:`DriftModel` is an immutable record holding a model kind and its
parameters. The scalar kernels below dispatch on the kind so that compiled
simulation loops can evaluate ``alpha``, its derivatives, the antiderivative
``A``, the rejection intensity ``phi = (alpha^2 + alpha') / 2`` and the bound
oracles without Python callbacks.

Packed layout passed to kernels (``DriftModel.packed``)::

    [phi_inf, sup_alpha_prime, p0, p1, p2, p3]
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

CONSTANT = 0
LINEAR_OU = 1
TRIG = 2
MODIFIED_OU = 3
SYMMETRIC_OU = 4
CIR_LAMPERTI = 5

INF = math.inf


class ModelValidationError(ValueError):
    """Model parameters violate a structural requirement."""


# ---------------------------------------------------------------------------
# scalar kernels


@njit(cache=True)
def k_alpha(kind, mv, y):
    if kind == CONSTANT:
        return mv[2]
    if kind == LINEAR_OU:
        return -mv[2] * y
    if kind == TRIG:
        return mv[2] * math.cos(y)
    if kind == MODIFIED_OU or kind == SYMMETRIC_OU:
        M = mv[2]
        if y <= -1.0:
            return -M * (y + 0.5)
        if kind == MODIFIED_OU and y > 0.0:
            return 0.0
        if y < 1.0:
            return 0.5 * M * y * y
        return M * (y - 0.5)
    # CIR after Lamperti: p = [kappa, vinf, eps, c]
    if y <= 0.0:
        return math.inf
    return mv[5] / y - 0.5 * mv[2] * y


@njit(cache=True)
def k_alpha_prime(kind, mv, y):
    if kind == CONSTANT:
        return 0.0
    if kind == LINEAR_OU:
        return -mv[2]
    if kind == TRIG:
        return -mv[2] * math.sin(y)
    if kind == MODIFIED_OU or kind == SYMMETRIC_OU:
        M = mv[2]
        if y <= -1.0:
            return -M
        if kind == MODIFIED_OU and y > 0.0:
            return 0.0
        if y < 1.0:
            return M * y
        return M
    if y <= 0.0:
        return -math.inf
    return -mv[5] / (y * y) - 0.5 * mv[2]


@njit(cache=True)
def k_alpha_second(kind, mv, y):
    # right limits at the knots of the piecewise drifts
    if kind == CONSTANT or kind == LINEAR_OU:
        return 0.0
    if kind == TRIG:
        return -mv[2] * math.cos(y)
    if kind == MODIFIED_OU:
        if -1.0 <= y < 0.0:
            return mv[2]
        return 0.0
    if kind == SYMMETRIC_OU:
        if -1.0 <= y < 1.0:
            return mv[2]
        return 0.0
    if y <= 0.0:
        return math.inf
    return 2.0 * mv[5] / (y * y * y)


@njit(cache=True)
def k_antiderivative(kind, mv, y):
    """A with A' = alpha; for CIR the additive constant is fixed by A(1) = -kappa/4."""
    if kind == CONSTANT:
        return mv[2] * y
    if kind == LINEAR_OU:
        return -0.5 * mv[2] * y * y
    if kind == TRIG:
        return mv[2] * math.sin(y)
    if kind == MODIFIED_OU or kind == SYMMETRIC_OU:
        M = mv[2]
        if y < -1.0:
            return -M / 6.0 - 0.5 * M * (y * y + y)
        if kind == MODIFIED_OU and y > 0.0:
            return 0.0
        if y <= 1.0:
            return M * y * y * y / 6.0
        return M / 6.0 + 0.5 * M * (y * y - y)
    if y <= 0.0:
        return -math.inf
    return mv[5] * math.log(y) - 0.25 * mv[2] * y * y


@njit(cache=True)
def k_phi(kind, mv, y):
    if kind == CIR_LAMPERTI and y <= 0.0:
        return math.inf
    a = k_alpha(kind, mv, y)
    return 0.5 * (a * a + k_alpha_prime(kind, mv, y))


@njit(cache=True)
def k_phi_tilde(kind, mv, y):
    """phi shifted by its infimum, hence >= 0 up to rounding."""
    return k_phi(kind, mv, y) - mv[0]


@njit(cache=True)
def k_sup_phi_given_min(kind, mv, m):
    """sup of (unshifted) phi over [m, inf); +inf when unbounded."""
    if kind == CONSTANT:
        return 0.5 * mv[2] * mv[2]
    if kind == TRIG:
        a = abs(mv[2])
        if a >= 0.5:
            return 0.5 * a * a + 0.125
        return 0.5 * a
    if kind == MODIFIED_OU:
        if m >= 0.0:
            return 0.0
        return max(0.0, k_phi(kind, mv, m))
    return math.inf


@njit(cache=True)
def k_sup_neg_alpha_prime_given_min(kind, mv, m):
    if kind == CONSTANT:
        return 0.0
    if kind == LINEAR_OU:
        return mv[2]
    if kind == TRIG:
        return abs(mv[2])
    if kind == MODIFIED_OU:
        return mv[2] * min(1.0, max(0.0, -m))
    if kind == SYMMETRIC_OU:
        return mv[2] * min(1.0, max(-1.0, -m))
    if m <= 0.0:
        return math.inf
    return mv[5] / (m * m) + 0.5 * mv[2]


# ---------------------------------------------------------------------------
# vectorised wrappers


@njit(cache=True)
def _map(which, kind, mv, ys, out):
    for i in range(ys.shape[0]):
        y = ys[i]
        if which == 0:
            out[i] = k_alpha(kind, mv, y)
        elif which == 1:
            out[i] = k_alpha_prime(kind, mv, y)
        elif which == 2:
            out[i] = k_alpha_second(kind, mv, y)
        elif which == 3:
            out[i] = k_antiderivative(kind, mv, y)
        elif which == 4:
            out[i] = k_phi(kind, mv, y)
        elif which == 5:
            out[i] = k_sup_phi_given_min(kind, mv, y)
        else:
            out[i] = k_sup_neg_alpha_prime_given_min(kind, mv, y)


@dataclass(frozen=True)
class EnvelopeSpec:
    """Gaussian envelope for the endpoint law ``h(t) ~ exp(A(t) - (t - x)^2 / 2T)``.

    Built from a quadratic upper bound ``A(t) <= q2 t^2 + q1 t + q0``; the
    proposal is the Gaussian with log-density ``q(t) - (t - x)^2 / 2T`` and a
    proposal at ``t`` is kept with probability ``exp(A(t) - q(t))``.
    """

    q2: float
    q1: float
    q0: float
    x: float
    T: float

    @property
    def precision(self) -> float:
        return 1.0 / self.T - 2.0 * self.q2

    @property
    def mean(self) -> float:
        return (self.x / self.T + self.q1) / self.precision

    @property
    def variance(self) -> float:
        return 1.0 / self.precision

    def as_array(self) -> np.ndarray:
        return np.array([self.mean, math.sqrt(self.variance), self.q2, self.q1, self.q0])

    def log_ratio(self, model: "DriftModel", y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return model.antiderivative(y) - (self.q2 * y * y + self.q1 * y + self.q0)


@dataclass(frozen=True)
class DriftModel:
    """Drift alpha of a unit-diffusion SDE together with its derived quantities."""

    name: str
    kind: int
    params: tuple[float, ...]
    phi_inf: float
    sup_alpha_prime: float
    domain_low: float = -INF
    knots: tuple[float, ...] = ()
    packed: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        p = list(self.params) + [0.0] * (4 - len(self.params))
        object.__setattr__(
            self, "packed", np.array([self.phi_inf, self.sup_alpha_prime, *p[:4]], dtype=float)
        )

    def _eval(self, which: int, y):
        arr = np.atleast_1d(np.asarray(y, dtype=float))
        out = np.empty_like(arr)
        _map(which, self.kind, self.packed, arr.ravel(), out.ravel())
        return float(out[0]) if np.ndim(y) == 0 else out.reshape(np.shape(y))

    def alpha(self, y):
        return self._eval(0, y)

    def alpha_prime(self, y):
        return self._eval(1, y)

    def alpha_second(self, y):
        return self._eval(2, y)

    def antiderivative(self, y):
        return self._eval(3, y)

    def phi(self, y):
        return self._eval(4, y)

    def phi_tilde(self, y):
        return self._eval(4, y) - self.phi_inf

    # bound oracles
    def sup_phi_given_min(self, m):
        return self._eval(5, m)

    def sup_neg_alpha_prime_given_min(self, m):
        return self._eval(6, m)

    def has_exact_cap(self) -> bool:
        """True when sup phi over [m, inf) is finite for every finite minimum m."""
        return self.kind in (CONSTANT, TRIG, MODIFIED_OU)

    def envelope(self, x: float, T: float, probes: int = 10_000) -> EnvelopeSpec:
        """Endpoint envelope for start ``x`` and horizon ``T``, certified on a probe grid."""
        if not T > 0:
            raise ModelValidationError("horizon must be positive")
        if not self.in_domain(x):
            raise ModelValidationError(f"start {x} outside the state space of {self.name}")
        env = _envelope_for(self, x, T)
        if not env.precision > 0:
            raise ModelValidationError(
                f"endpoint density of {self.name} is not integrable for T={T}"
            )
        sd = math.sqrt(env.variance)
        grid = env.mean + sd * np.linspace(-12.0, 12.0, probes)
        if self.domain_low > -INF:
            grid = grid[grid > self.domain_low]
        worst = float(np.max(env.log_ratio(self, grid)))
        if worst > 1e-12:
            raise ModelValidationError(f"envelope does not dominate the endpoint law (log ratio {worst})")
        return env

    def in_domain(self, y: float) -> bool:
        return y > self.domain_low


def phi(model: DriftModel, y):
    """(alpha(y)^2 + alpha'(y)) / 2, or +inf outside the state space."""
    return model.phi(y)


def _envelope_for(model: DriftModel, x: float, T: float) -> EnvelopeSpec:
    k, p = model.kind, model.params
    if k == CONSTANT:
        return EnvelopeSpec(0.0, p[0], 0.0, x, T)
    if k == LINEAR_OU:
        return EnvelopeSpec(-0.5 * p[0], 0.0, 0.0, x, T)
    if k == TRIG:
        return EnvelopeSpec(0.0, 0.0, abs(p[0]), x, T)
    if k == MODIFIED_OU:
        return EnvelopeSpec(0.0, 0.0, 0.0, x, T)
    if k == SYMMETRIC_OU:
        return EnvelopeSpec(0.5 * p[0], 0.0, 0.0, x, T)
    kappa, c = p[0], p[3]
    # tangent line of c*log at the mode x_bar of h
    sigma2 = 1.0 / (0.5 * kappa + 1.0 / T)
    x_hat = sigma2 * x / T
    x_bar = 0.5 * (x_hat + math.sqrt(x_hat * x_hat + 4.0 * c * sigma2))
    return EnvelopeSpec(-0.25 * kappa, c / x_bar, c * math.log(x_bar) - c, x, T)


def cir_endpoint_constants(kappa: float, v_inf: float, eps: float, x: float, T: float) -> dict:
    """c, sigma^2, x_hat, x_bar of the CIR endpoint density ``R y^c exp(-(y - x_hat)^2 / 2 sigma^2)``."""
    c = 2.0 * kappa * v_inf / eps**2 - 0.5
    sigma2 = 1.0 / (0.5 * kappa + 1.0 / T)
    x_hat = 2.0 * sigma2 * x / (2.0 * T)
    x_bar = 0.5 * (x_hat + math.sqrt(x_hat * x_hat + 4.0 * c * sigma2))
    return {"c": c, "sigma2": sigma2, "x_hat": x_hat, "x_bar": x_bar}


# ---------------------------------------------------------------------------
# constructors


def _finite(*vals: float) -> None:
    if not all(math.isfinite(v) for v in vals):
        raise ModelValidationError("model parameters must be finite")


def make_constant(c: float) -> DriftModel:
    _finite(c)
    return DriftModel("constant", CONSTANT, (float(c),), phi_inf=0.5 * c * c, sup_alpha_prime=0.0)


def make_linear_ou(lam: float) -> DriftModel:
    _finite(lam)
    if not lam > 0:
        raise ModelValidationError("linear OU needs lambda > 0")
    return DriftModel("linear-ou", LINEAR_OU, (float(lam),), phi_inf=-0.5 * lam, sup_alpha_prime=-lam)


def make_trig(a: float) -> DriftModel:
    _finite(a)
    return DriftModel("trig", TRIG, (float(a),), phi_inf=-0.5 * abs(a), sup_alpha_prime=abs(a))


def _piecewise_phi_inf(M: float) -> float:
    # minimum sits at y = -1 for M < 1, else at the interior critical point -M^(-1/3)
    if M < 1.0:
        return M * M / 8.0 - M / 2.0
    return -3.0 * M ** (2.0 / 3.0) / 8.0


def make_modified_ou(M: float) -> DriftModel:
    _finite(M)
    if not M >= 0.5:
        raise ModelValidationError(f"modified OU needs M >= 1/2, got {M}")
    return DriftModel(
        "modified-ou", MODIFIED_OU, (float(M),), phi_inf=_piecewise_phi_inf(M),
        sup_alpha_prime=0.0, knots=(-1.0, 0.0),
    )


def make_symmetric_ou(M: float) -> DriftModel:
    _finite(M)
    if not M >= 0.5:
        raise ModelValidationError(f"symmetric OU needs M >= 1/2, got {M}")
    return DriftModel(
        "symmetric-ou", SYMMETRIC_OU, (float(M),), phi_inf=_piecewise_phi_inf(M),
        sup_alpha_prime=float(M), knots=(-1.0, 1.0),
    )


def cir_degree(kappa: float, v_inf: float, eps: float) -> float:
    return 4.0 * kappa * v_inf / eps**2


def make_cir_lamperti(kappa: float, v_inf: float, eps: float) -> DriftModel:
    """Drift of ``X = 2 sqrt(V) / eps`` for a CIR process V; requires degree >= 3."""
    _finite(kappa, v_inf, eps)
    if not (kappa > 0 and v_inf > 0 and eps > 0):
        raise ModelValidationError("CIR needs kappa, v_inf, eps > 0")
    d = cir_degree(kappa, v_inf, eps)
    if d < 3.0:
        raise ModelValidationError(
            f"CIR degree d = 4 kappa v_inf / eps^2 = {d:.6g} < 3; the transformed phi is not bounded below"
        )
    ratio = 2.0 * kappa * v_inf / eps**2
    c = ratio - 0.5
    a_phi = (ratio - 1.0) ** 2 - 0.25
    phi_inf = 0.5 * kappa * math.sqrt(a_phi) - kappa**2 * v_inf / eps**2
    return DriftModel(
        "cir", CIR_LAMPERTI, (float(kappa), float(v_inf), float(eps), c),
        phi_inf=phi_inf, sup_alpha_prime=-0.5 * kappa, domain_low=0.0,
    )


BUILDERS = {
    "constant": (make_constant, ("c",)),
    "linear-ou": (make_linear_ou, ("lambda",)),
    "trig": (make_trig, ("a",)),
    "modified-ou": (make_modified_ou, ("m",)),
    "symmetric-ou": (make_symmetric_ou, ("m",)),
    "cir": (make_cir_lamperti, ("kappa", "vinf", "eps")),
}
