import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from exactsde.drift import (
    BUILDERS,
    ModelValidationError,
    cir_degree,
    cir_endpoint_constants,
    make_cir_lamperti,
    make_constant,
    make_linear_ou,
    make_modified_ou,
    make_symmetric_ou,
    make_trig,
    phi,
)

MODELS = {
    "constant": make_constant(0.3),
    "linear-ou": make_linear_ou(0.5),
    "trig": make_trig(1.0),
    "modified-ou": make_modified_ou(0.5),
    "modified-ou-large": make_modified_ou(3.0),
    "symmetric-ou": make_symmetric_ou(0.5),
    "cir": make_cir_lamperti(0.5, 0.04, 0.1),
}


def _probes(model, n=10_000):
    lo = 0.05 if model.domain_low == 0.0 else -6.0
    y = np.linspace(lo, 12.0 if model.domain_low == 0.0 else 6.0, n)
    knots = np.array(model.knots)
    if knots.size:
        y = y[np.min(np.abs(y[:, None] - knots[None, :]), axis=1) > 1e-3]
    return y


def test_documented_point_values():
    mou = make_modified_ou(0.5)
    assert mou.phi(1.0) == pytest.approx(0.0, abs=1e-15)
    assert mou.phi(-1.0) == pytest.approx(-0.21875, abs=1e-15)
    assert mou.alpha(-2.0) == pytest.approx(0.75)
    assert mou.alpha_prime(-0.5) == pytest.approx(-0.25)
    assert make_cir_lamperti(0.5, 0.04, 0.1).phi(4.0) == pytest.approx(-0.2265625, abs=1e-12)
    assert make_constant(0.3).antiderivative(2.0) == pytest.approx(0.6)
    assert make_linear_ou(0.5).phi(0.0) == pytest.approx(-0.25)
    sou = make_symmetric_ou(0.5)
    assert sou.alpha(2.0) == pytest.approx(0.75)
    assert sou.phi(0.0) == pytest.approx(0.0, abs=1e-15)


def test_trig_phi_bounded():
    y = np.linspace(-20, 20, 10_000)
    assert np.max(np.abs(make_trig(1.0).phi(y))) <= 1.0


def test_symmetric_ou_phi_blows_up_on_both_sides():
    m = make_symmetric_ou(0.5)
    assert m.phi(-50.0) > 100 and m.phi(50.0) > 100
    assert not m.has_exact_cap()


def test_modified_ou_phi_limits():
    m = make_modified_ou(0.5)
    assert m.phi(-50.0) > 100
    assert abs(m.phi(50.0) - m.phi(60.0)) < 1e-12
    assert math.isfinite(m.sup_phi_given_min(-5.0))


@pytest.mark.parametrize("y0", [-1.0, 0.0])
@pytest.mark.parametrize("M", [0.5, 2.0])
def test_modified_ou_phi_continuous_at_knots(M, y0):
    m = make_modified_ou(M)
    h = 1e-13
    assert abs(m.phi(y0 - h) - m.phi(y0 + h)) < 1e-12


def test_cir_degree_and_constants():
    assert cir_degree(0.5, 0.04, 0.1) == pytest.approx(8.0)
    assert cir_endpoint_constants(0.5, 0.04, 0.1, 4.0, 1.0)["c"] == pytest.approx(3.5)
    with pytest.raises(ModelValidationError, match="< 3"):
        make_cir_lamperti(0.5, 0.01, 0.1)


def test_cir_outside_domain_is_infinite():
    m = make_cir_lamperti(0.5, 0.04, 0.1)
    assert phi(m, -1.0) == math.inf
    assert phi(m, 0.0) == math.inf
    assert not m.in_domain(0.0)


@pytest.mark.parametrize("M", [0.49, 0.0, -1.0])
def test_ou_variants_need_m_at_least_half(M):
    with pytest.raises(ModelValidationError):
        make_modified_ou(M)
    with pytest.raises(ModelValidationError):
        make_symmetric_ou(M)


@pytest.mark.parametrize("name", list(MODELS))
def test_derivative_consistency(name):
    model = MODELS[name]
    y = _probes(model)
    h = 1e-6
    a = model.alpha(y)
    fd_a = (model.antiderivative(y + h) - model.antiderivative(y - h)) / (2 * h)
    fd_ap = (model.alpha(y + h) - model.alpha(y - h)) / (2 * h)
    fd_app = (model.alpha_prime(y + h) - model.alpha_prime(y - h)) / (2 * h)
    scale = 1.0 + np.abs(a)
    assert np.max(np.abs(fd_a - a) / scale) < 1e-5
    assert np.max(np.abs(fd_ap - model.alpha_prime(y)) / (1 + np.abs(fd_ap))) < 1e-5
    assert np.max(np.abs(fd_app - model.alpha_second(y)) / (1 + np.abs(fd_app))) < 1e-4
    identity = 0.5 * (a * a + model.alpha_prime(y))
    assert np.max(np.abs(model.phi(y) - identity)) <= 1e-12 * np.max(1 + np.abs(identity))


@pytest.mark.parametrize("name", list(MODELS))
def test_phi_inf_is_a_lower_bound(name):
    model = MODELS[name]
    y = _probes(model, 100_000)
    assert np.min(model.phi_tilde(y)) >= -1e-12
    # and it is attained (to probe resolution)
    assert np.min(model.phi_tilde(y)) < 1e-3


@pytest.mark.parametrize("name", list(MODELS))
def test_sup_alpha_prime(name):
    model = MODELS[name]
    ap = model.alpha_prime(_probes(model, 100_000))
    assert np.max(ap) <= model.sup_alpha_prime + 1e-12


@pytest.mark.parametrize("name", list(MODELS))
@given(m=st.floats(-5.0, 3.0), gap=st.floats(0.0, 5.0))
def test_bound_oracles_dominate_and_are_monotone(name, m, gap):
    model = MODELS[name]
    if model.domain_low == 0.0:
        m = abs(m) + 0.05
    assert model.sup_phi_given_min(m) >= model.sup_phi_given_min(m + gap)
    assert model.sup_neg_alpha_prime_given_min(m) >= model.sup_neg_alpha_prime_given_min(m + gap)
    v = m + np.linspace(0.0, 10.0, 400)
    assert np.all(model.phi(v) <= model.sup_phi_given_min(m) + 1e-12)
    assert np.all(-model.alpha_prime(v) <= model.sup_neg_alpha_prime_given_min(m) + 1e-12)


@pytest.mark.parametrize("name", list(MODELS))
@given(x=st.floats(-2.0, 2.0), T=st.floats(0.1, 1.0))
def test_envelope_dominates_endpoint_law(name, x, T):
    model = MODELS[name]
    if model.domain_low == 0.0:
        x = abs(x) * 3 + 0.5
    env = model.envelope(x, T)
    grid = env.mean + math.sqrt(env.variance) * np.linspace(-10, 10, 2001)
    grid = grid[grid > model.domain_low]
    assert np.max(env.log_ratio(model, grid)) <= 1e-12


def test_builders_cover_every_model():
    assert set(BUILDERS) == {"constant", "linear-ou", "trig", "modified-ou", "symmetric-ou", "cir"}
