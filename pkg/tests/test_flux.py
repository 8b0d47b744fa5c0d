import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nonlocal_fv.flux import (
    SchemeError, engquist_osher_concave_g, engquist_osher_g, godunov_g,
    kruzkov_numerical_entropy_flux, lipschitz_violation, make_scheme, scheme_constants,
)
from nonlocal_fv.model import make_model

ARR = make_model("arrhenius", (0.0, 0.8))
SED = make_model("sedimentation", (0.0, 0.6))
NLWR = make_model("nlwr", (0.0, 1.0))
unit = st.floats(0.0, 0.8, allow_nan=False)


def schemes(model):
    out = [make_scheme("godunov", model), make_scheme("engquist_osher", model),
           make_scheme("lax_friedrichs", model), make_scheme("lax_friedrichs", model, 3.0)]
    if model.g_is_linear:
        out.append(make_scheme("upwind", model))
    return out


@pytest.mark.parametrize("model", [ARR, SED, NLWR], ids=lambda m: m.name)
def test_consistency(model):
    r = np.linspace(model.rho_min, model.rho_max, 1001)
    for s in schemes(model):
        np.testing.assert_allclose(s.reduced(r, r), model.g(r), rtol=0, atol=1e-15)


@pytest.mark.parametrize("model", [ARR, SED, NLWR], ids=lambda m: m.name)
def test_monotonicity_sampled(model):
    rng = np.random.default_rng(1)
    a, b = rng.uniform(model.rho_min, model.rho_max, (2, 10_000))
    h = 1e-7
    for s in schemes(model):
        assert np.all(s.reduced(a + h, b) - s.reduced(a, b) >= -1e-12), s.name
        assert np.all(s.reduced(a, b + h) - s.reduced(a, b) <= 1e-12), s.name


@pytest.mark.parametrize("model", [ARR, SED, NLWR], ids=lambda m: m.name)
def test_weak_lipschitz_sampled(model):
    for s in schemes(model):
        c = scheme_constants(s, samples=10_000, seed=3)
        assert lipschitz_violation(s, c, samples=10_000, seed=4) <= 1e-12


def test_constants_closed_forms():
    g = scheme_constants(make_scheme("godunov", ARR))
    assert (g.l1, g.l2, g.norm_g_flux) == pytest.approx((1.0, 1.0, 0.25))
    lxf = scheme_constants(make_scheme("lax_friedrichs", ARR, 2.0))
    assert (lxf.l1, lxf.l2) == pytest.approx((1.5, 1.5))
    assert lxf.norm_g_flux == pytest.approx(0.25 + 0.8)
    up = scheme_constants(make_scheme("upwind", NLWR))
    assert up.l2 == 0.0


def test_linear_flux_schemes_coincide():
    rng = np.random.default_rng(7)
    a, b = rng.uniform(0, 1, (2, 10_000))
    god = godunov_g(a, b, NLWR)
    eo = engquist_osher_g(a, b, NLWR)
    up = make_scheme("upwind", NLWR).reduced(a, b)
    assert np.max(np.abs(god - eo)) <= 1e-14
    assert np.max(np.abs(god - up)) <= 1e-14
    np.testing.assert_array_equal(up, a)


@settings(max_examples=300, deadline=None)
@given(unit, unit)
def test_eo_matches_concave_shortcut(a, b):
    full = engquist_osher_g(np.array([a]), np.array([b]), ARR)[0]
    short = engquist_osher_concave_g(a, b, ARR, 0.5)
    assert full == pytest.approx(float(short), abs=1e-15)


@settings(max_examples=300, deadline=None)
@given(unit, unit)
def test_godunov_is_extremum_of_g(a, b):
    x = np.linspace(min(a, b), max(a, b), 2001)
    gx = ARR.g(x)
    val = godunov_g(np.array([a]), np.array([b]), ARR)[0]
    # the sampled extremum can only undershoot a max (overshoot a min) by O(h^2)
    if a <= b:
        assert gx.min() - 1e-6 <= val <= gx.min() + 1e-15
    else:
        assert gx.max() - 1e-15 <= val <= gx.max() + 1e-6


def test_eo_and_godunov_agree_below_critical_point():
    rng = np.random.default_rng(2)
    a, b = rng.uniform(0, 0.5, (2, 1000))
    np.testing.assert_allclose(engquist_osher_g(a, b, ARR), godunov_g(a, b, ARR), atol=1e-15)


def test_guards():
    with pytest.raises(SchemeError):
        make_scheme("upwind", ARR)
    with pytest.raises(SchemeError):
        make_scheme("lax_friedrichs", ARR, 0.5)
    with pytest.raises(SchemeError):
        make_scheme("godunov", ARR, 1.0)
    with pytest.raises(SchemeError):
        make_scheme("nope", ARR)
    with pytest.raises(SchemeError):
        make_scheme("godunov", ARR).evaluate(0.1, 0.2, -1.0)
    assert make_scheme("lax_friedrichs", ARR).alpha == pytest.approx(1.0)
    # Lax-Friedrichs accepts either sign
    make_scheme("lax_friedrichs", ARR).evaluate(0.1, 0.2, -1.0)


def test_kruzkov_flux_reduces_to_flux_difference():
    s = make_scheme("godunov", ARR)
    u, w, V = np.array([0.3, 0.7]), np.array([0.6, 0.1]), np.array([0.9, 0.5])
    # k below both states: F(u, w) - g(k) V
    k = 0.05
    np.testing.assert_allclose(kruzkov_numerical_entropy_flux(u, w, k, V, s),
                               s.evaluate(u, w, V) - ARR.g(k) * V, atol=1e-16)
    # k above both states: g(k) V - F(u, w)
    k = 0.75
    np.testing.assert_allclose(kruzkov_numerical_entropy_flux(u, w, k, V, s),
                               ARR.g(k) * V - s.evaluate(u, w, V), atol=1e-16)
