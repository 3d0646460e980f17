"""Biased comparison estimators: Euler scheme with finite differences, and
Euler-discretised Malliavin weights.

Unit-diffusion models are stepped as ``X += alpha(X) dt + sqrt(dt) N``. CIR
is stepped on ``V`` with full truncation, i.e. drift and diffusion see
``max(V, 0)``. Path ``i`` always uses the stream ``(seed, i)``; the three
finite-difference bumps of one path share its normals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from .drift import CIR_LAMPERTI, DriftModel, k_alpha, k_alpha_prime, k_alpha_second, make_cir_lamperti
from .estimators import CHUNK, EstimatorResult, PayoffSpec, _Moments, cir_to_x, k_payoff, set_workers
from .randomness import RngStream, seed_state, standard_normal

_FULL_TRUNCATION = "full-truncation"


@dataclass(frozen=True)
class EulerConfig:
    step: float
    cir_scheme: str = _FULL_TRUNCATION

    def __post_init__(self) -> None:
        if not self.step > 0:
            raise ValueError("Euler step must be positive")
        if self.cir_scheme != _FULL_TRUNCATION:
            raise ValueError(f"unsupported CIR scheme {self.cir_scheme!r}")

    def n_steps(self, T: float) -> int:
        n = int(round(T / self.step))
        if n < 1 or abs(n * self.step - T) > 1e-12 * max(1.0, T):
            raise ValueError(f"step {self.step} does not divide horizon {T}")
        return n


@dataclass(frozen=True)
class CIRParams:
    """``dV = kappa (v_inf - V) dt + eps sqrt(V) dW``."""

    kappa: float
    v_inf: float
    eps: float

    def lamperti(self) -> DriftModel:
        return make_cir_lamperti(self.kappa, self.v_inf, self.eps)


# ---------------------------------------------------------------------------
# kernels


@njit(cache=True)
def k_euler_x(kind, mv, x0, dt, n, st):
    sq = math.sqrt(dt)
    x = x0
    for _ in range(n):
        x += k_alpha(kind, mv, x) * dt + sq * standard_normal(st)
    return x


@njit(cache=True)
def k_euler_v(kappa, vinf, eps, v0, dt, n, st):
    sq = math.sqrt(dt)
    v = v0
    for _ in range(n):
        vp = max(v, 0.0)
        v += kappa * (vinf - vp) * dt + eps * math.sqrt(vp) * sq * standard_normal(st)
    return v


@njit(cache=True)
def k_fd_path(is_cir, kind, mv, cir, x0, h, dt, n, pay, st, out):
    """Euler from ``x0 - h``, ``x0``, ``x0 + h`` on common normals."""
    sq = math.sqrt(dt)
    a = x0 - h
    b = x0
    c = x0 + h
    for _ in range(n):
        dw = sq * standard_normal(st)
        if is_cir:
            ap = max(a, 0.0)
            bp = max(b, 0.0)
            cp = max(c, 0.0)
            a += cir[0] * (cir[1] - ap) * dt + cir[2] * math.sqrt(ap) * dw
            b += cir[0] * (cir[1] - bp) * dt + cir[2] * math.sqrt(bp) * dw
            c += cir[0] * (cir[1] - cp) * dt + cir[2] * math.sqrt(cp) * dw
        else:
            a += k_alpha(kind, mv, a) * dt + dw
            b += k_alpha(kind, mv, b) * dt + dw
            c += k_alpha(kind, mv, c) * dt + dw
    pa = k_payoff(pay, a)
    pb = k_payoff(pay, b)
    pc = k_payoff(pay, c)
    out[0] = pb
    out[1] = (pc - pa) / (2.0 * h)
    out[2] = (pc - 2.0 * pb + pa) / (h * h)


@njit(cache=True, parallel=True)
def k_fd_batch(is_cir, kind, mv, cir, x0, h, dt, n, pay, seed, start, vals):
    for j in prange(vals.shape[0]):
        st = np.empty(4, dtype=np.uint64)
        seed_state(st, seed, np.uint64(start + j))
        k_fd_path(is_cir, kind, mv, cir, x0, h, dt, n, pay, st, vals[j])


@njit(cache=True)
def k_malliavin_path(kind, mv, x0, dt, n, pay, st, out):
    """Euler path with the Delta and Gamma Malliavin weights as left Riemann sums."""
    T = n * dt
    sq = math.sqrt(dt)
    x = x0
    w = 0.0
    logy = 0.0
    int_wya = 0.0  # int W Y alpha'
    int_y2 = 0.0  # int Y^2
    int_tmsa2y = 0.0  # int (T - s) alpha'' Y
    int_smt_wa2y2 = 0.0  # int (s - T) W alpha'' Y^2
    inner = 0.0  # int_0^s (u - T) alpha'' Y du
    int_nested = 0.0  # int W alpha' Y inner ds
    for k in range(n):
        s = k * dt
        y = math.exp(logy)
        a1 = k_alpha_prime(kind, mv, x)
        a2 = k_alpha_second(kind, mv, x)
        int_wya += w * y * a1 * dt
        int_y2 += y * y * dt
        int_tmsa2y += (T - s) * a2 * y * dt
        int_smt_wa2y2 += (s - T) * w * a2 * y * y * dt
        int_nested += w * a1 * y * inner * dt
        inner += (s - T) * a2 * y * dt
        dw = sq * standard_normal(st)
        x += k_alpha(kind, mv, x) * dt + dw
        if kind == CIR_LAMPERTI and x <= 0.0:
            x = -x  # the transformed CIR state lives on (0, inf)
        w += dw
        logy += a1 * dt
    yT = math.exp(logy)
    ito = w * yT - int_wya
    psi = k_payoff(pay, x)
    out[0] = psi
    out[1] = psi * ito / T
    g = ito * ito - int_y2 + w * yT * int_tmsa2y + int_smt_wa2y2 + int_nested
    out[2] = psi * g / (T * T)


@njit(cache=True, parallel=True)
def k_malliavin_batch(kind, mv, x0, dt, n, pay, seed, start, vals):
    for j in prange(vals.shape[0]):
        st = np.empty(4, dtype=np.uint64)
        seed_state(st, seed, np.uint64(start + j))
        k_malliavin_path(kind, mv, x0, dt, n, pay, st, vals[j])


# ---------------------------------------------------------------------------
# drivers


def _result(m: _Moments, quantity: str) -> EstimatorResult:
    return EstimatorResult(
        mean=m.mean,
        std_error=math.sqrt(m.m2 / (m.n - 1) / m.n),
        n_paths=m.n,
        n_proposals=m.n,
        accept_rate=1.0,
        avg_points_revealed=0.0,
        truncation_k=math.nan,
        quantity=quantity,
    )


def _reduce(fill, n_paths: int, weights: list[np.ndarray], names: list[str]) -> list[EstimatorResult]:
    if n_paths < 2:
        raise ValueError("n_paths must be >= 2")
    moms = [_Moments() for _ in weights]
    for start in range(0, n_paths, CHUNK):
        nb = min(CHUNK, n_paths - start)
        vals = np.empty((nb, 3))
        fill(start, vals)
        for mom, w in zip(moms, weights):
            mom.add(vals @ w)
    return [_result(m, q) for m, q in zip(moms, names)]


def _seed(seed: int) -> np.uint64:
    return np.uint64(int(seed) & ((1 << 64) - 1))


def euler_endpoint(target: DriftModel | CIRParams, x0: float, T: float, cfg: EulerConfig, s: RngStream) -> float:
    """One Euler realisation of the terminal value."""
    n = cfg.n_steps(T)
    if isinstance(target, CIRParams):
        return float(k_euler_v(target.kappa, target.v_inf, target.eps, float(x0), cfg.step, n, s.state))
    return float(k_euler_x(target.kind, target.packed, float(x0), cfg.step, n, s.state))


def fd_greeks(
    target: DriftModel | CIRParams,
    x0: float,
    T: float,
    payoff: PayoffSpec,
    cfg: EulerConfig,
    dx: float,
    n_paths: int,
    seed: int = 0,
    workers: int | None = None,
) -> tuple[EstimatorResult, EstimatorResult, EstimatorResult]:
    """Euler price with central-difference Delta and Gamma (common random numbers).

    For CIR the bump ``dx`` is applied to ``v0`` and the payoff acts on ``V``.
    """
    if not dx > 0:
        raise ValueError("dx must be positive")
    n = cfg.n_steps(T)
    set_workers(workers)
    pay = payoff.packed()
    if isinstance(target, CIRParams):
        is_cir, kind, mv = True, 0, np.zeros(6)
        cir = np.array([target.kappa, target.v_inf, target.eps])
    else:
        is_cir, kind, mv, cir = False, target.kind, target.packed, np.zeros(3)
    sd = _seed(seed)

    def fill(start, vals):
        k_fd_batch(is_cir, kind, mv, cir, float(x0), float(dx), cfg.step, n, pay, sd, start, vals)

    eye = np.eye(3)
    return tuple(_reduce(fill, n_paths, [eye[0], eye[1], eye[2]], ["price", "delta", "gamma"]))


def malliavin_euler_greeks(
    target: DriftModel | CIRParams,
    x0: float,
    T: float,
    payoff: PayoffSpec,
    cfg: EulerConfig,
    n_paths: int,
    seed: int = 0,
    workers: int | None = None,
) -> tuple[EstimatorResult, EstimatorResult]:
    """Delta and Gamma from Euler-discretised Malliavin weights.

    CIR is simulated on the unit-diffusion state ``x = 2 sqrt(v) / eps`` with
    the payoff applied to ``eps^2 x^2 / 4``, and the Greeks are mapped back to
    ``v`` by the chain rule, path by path.
    """
    n = cfg.n_steps(T)
    set_workers(workers)
    sd = _seed(seed)
    if isinstance(target, CIRParams):
        model = target.lamperti()
        x = cir_to_x(x0, target.eps)
        pay = payoff.packed(premap_eps=target.eps)
        d1 = 1.0 / (target.eps * math.sqrt(x0))
        d2 = -1.0 / (2.0 * target.eps * x0 ** 1.5)
        weights = [np.array([0.0, d1, 0.0]), np.array([0.0, d2, d1 * d1])]
    else:
        model, x, pay = target, float(x0), payoff.packed()
        weights = [np.array([0.0, 1.0, 0.0]), np.array([0.0, 0.0, 1.0])]

    def fill(start, vals):
        k_malliavin_batch(model.kind, model.packed, x, cfg.step, n, pay, sd, start, vals)

    return tuple(_reduce(fill, n_paths, weights, ["delta", "gamma"]))
