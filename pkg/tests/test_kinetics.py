import math

import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from bdcomp.kinetics import (KineticsDomainError, NoCoexistence, ScaledParams, Sensitivity, SystemParams,
                             classify_regime, coexistence, compute_equilibria, dimensionalize, eval_kinetics,
                             kinetics_derivatives, nondimensionalize)
from bdcomp.presets import spike_params, pattern_params

pos = st.floats(0.05, 3.0)


@st.composite
def params(draw):
    return ScaledParams(D1=1.0, D2=1.0, chi=0.0, a1=draw(pos), b1=draw(pos), c1=draw(pos),
                        a2=draw(pos), b2=draw(pos), c2=draw(pos), L=1.0)


@st.composite
def weak_params(draw):
    # c1/c2 < (1-a1)/(1-a2) < b1/b2 built from the middle ratio outwards
    a1, a2 = draw(st.floats(0.05, 0.9)), draw(st.floats(0.05, 0.9))
    r2 = (1 - a1) / (1 - a2)
    c2, b2 = draw(st.floats(0.2, 2.0)), draw(st.floats(0.2, 2.0))
    c1 = c2 * r2 * draw(st.floats(0.05, 0.9))
    b1 = b2 * r2 / draw(st.floats(0.05, 0.9))
    return ScaledParams(D1=1.0, D2=0.1, chi=0.0, a1=a1, b1=b1, c1=c1, a2=a2, b2=b2, c2=c2, L=3.0)


def test_extinction_state_is_a_zero():
    assert eval_kinetics(pattern_params(), 0.0, 0.0) == (0.0, 0.0)


def test_pattern_coexistence_is_a_zero():
    f, g = eval_kinetics(pattern_params(), 1 / 6, 1 / 3)
    assert abs(f) < 1e-15 and abs(g) < 1e-15


def test_spike_set_equilibrium():
    e = coexistence(spike_params())
    assert e.u == pytest.approx(14 / 15, abs=1e-12)
    assert e.v == pytest.approx(8 / 15, abs=1e-12)
    f, g = eval_kinetics(spike_params(), 0.93333333, 0.53333333)
    assert abs(f) < 1e-6 and abs(g) < 1e-6


def test_negative_density_rejected():
    with pytest.raises(KineticsDomainError):
        eval_kinetics(pattern_params(), -1e-3, 0.2)
    with pytest.raises(KineticsDomainError):
        kinetics_derivatives(pattern_params(), 0.1, -0.2)


def test_first_order_table_at_coexistence_is_the_linearisation():
    p = pattern_params()
    e = coexistence(p)
    d = kinetics_derivatives(p, e.u, e.v)
    np.testing.assert_allclose([d["f_u"], d["f_v"], d["g_u"], d["g_v"]],
                               [-p.b1 * e.u, -p.c1 * e.u, -p.b2 * e.v, -p.c2 * e.v], rtol=1e-12)


def test_first_order_at_origin():
    p = spike_params()
    d = kinetics_derivatives(p, 0.0, 0.0)
    assert d["f_u"] == pytest.approx(-1 + 1 / p.a1)
    assert d["g_v"] == pytest.approx(-1 + 1 / p.a2)


def test_derivatives_match_sympy():
    p = spike_params()
    u, v = sympy.symbols("u v")
    f = (-1 + 1 / (p.a1 + p.b1 * u + p.c1 * v)) * u
    g = (-1 + 1 / (p.a2 + p.b2 * u + p.c2 * v)) * v
    d = kinetics_derivatives(p, 0.7, 0.3, order=3)
    for key in d:
        if key in ("f", "g"):
            continue
        name, var = key.split("_")
        expr = f if name == "f" else g
        for ch in var:
            expr = sympy.diff(expr, u if ch == "u" else v)
        assert d[key] == pytest.approx(float(expr.subs({u: 0.7, v: 0.3})), rel=1e-12, abs=1e-13), key


@settings(max_examples=100, deadline=None)
@given(params(), st.floats(0.0, 2.0), st.floats(0.0, 2.0))
def test_derivatives_match_finite_differences(p, u, v):
    h = 1e-5
    u, v = u + 2 * h, v + 2 * h  # keep the stencil inside the domain
    d = kinetics_derivatives(p, u, v, order=3)
    for key, val in d.items():
        if key in ("f", "g"):
            continue
        name, var = key.split("_")
        lower = name if len(var) == 1 else f"{name}_{var[:-1]}"
        du, dv = (h, 0.0) if var[-1] == "u" else (0.0, h)
        plus = kinetics_derivatives(p, u + du, v + dv, order=2)[lower]
        minus = kinetics_derivatives(p, u - du, v - dv, order=2)[lower]
        fd = (plus - minus) / (2 * h)
        assert abs(fd - val) <= 1e-6 * max(1.0, abs(val)), key


def test_scaling_identity():
    raw = SystemParams(D1=1, D2=0.1, chi=2, alpha1=1, alpha2=1, beta1=1, beta2=1,
                       a1=0.5, b1=2, c1=0.5, a2=0.5, b2=1, c2=1, L=3)
    s = nondimensionalize(raw)
    assert (s.time_scale, s.length_scale, s.beta1, s.beta2) == (1, 1, 1, 1)
    assert s.kinetic == (0.5, 2, 0.5, 0.5, 1, 1)
    assert s.L == 3


def test_scaling_doubles_length_for_alpha_four():
    raw = SystemParams(D1=1, D2=0.1, chi=2, alpha1=4, alpha2=4, beta1=2, beta2=3,
                       a1=0.5, b1=2, c1=0.5, a2=0.5, b2=1, c2=1, L=3)
    assert nondimensionalize(raw).L == pytest.approx(6.0)


def test_scaling_by_substitution():
    # Take a scaled solution candidate U(T, X), map it back with T = alpha t,
    # X = sqrt(alpha) x and check that the unscaled u-equation residual is
    # alpha times the scaled one, for symbolic alpha and beta.
    t, x, T, X = sympy.symbols("t x T X", real=True)
    alpha, beta, a, b, c, D, chi = sympy.symbols("alpha beta a b c D chi", positive=True)
    U = sympy.exp(-T) * sympy.cos(X) + 2
    V = sympy.exp(-2 * T) * sympy.sin(X) + 3
    back = {T: alpha * t, X: sympy.sqrt(alpha) * x}
    u, v = U.subs(back), V.subs(back)
    raw = (sympy.diff(u, t) - sympy.diff(D * sympy.diff(u, x) + chi * u * sympy.diff(v, x), x)
           - (beta / (a + b * u + c * v) - alpha) * u)
    k = alpha / beta
    scaled = (sympy.diff(U, T) - sympy.diff(D * sympy.diff(U, X) + chi * U * sympy.diff(V, X), X)
              - (1 / (k * a + k * b * U + k * c * V) - 1) * U)
    assert sympy.simplify(raw - alpha * scaled.subs(back)) == 0


def test_scaling_rejects_unequal_death_rates():
    raw = SystemParams(D1=1, D2=0.1, chi=2, alpha1=1, alpha2=2, beta1=1, beta2=1,
                       a1=0.5, b1=2, c1=0.5, a2=0.5, b2=1, c2=1, L=3)
    with pytest.raises(ValueError):
        nondimensionalize(raw)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 10), st.floats(0.1, 10), st.floats(0.1, 10), st.floats(0.1, 5))
def test_scaling_round_trip(alpha, b1, b2, L):
    raw = SystemParams(D1=1.3, D2=0.2, chi=-4, alpha1=alpha, alpha2=alpha, beta1=b1, beta2=b2,
                       a1=0.5, b1=2, c1=0.7, a2=0.3, b2=1.1, c2=0.9, L=L)
    back = dimensionalize(nondimensionalize(raw))
    for k, val in raw.to_dict().items():
        if k != "phi":
            assert getattr(back, k) == pytest.approx(val, rel=1e-12), k


def test_equilibria_pattern_set():
    eqs = compute_equilibria(pattern_params())
    kinds = [e.kind for e in eqs]
    assert kinds == ["extinction", "v-only", "u-only", "coexistence"]
    e = eqs.get("coexistence")
    assert (e.u, e.v) == (pytest.approx(1 / 6, abs=1e-14), pytest.approx(1 / 3, abs=1e-14))


def test_u_only_dropped_when_a1_large():
    eqs = compute_equilibria(pattern_params().with_(a1=1.2))
    assert eqs.get("u-only") is None
    assert "u-only" in eqs.omitted
    assert "coexistence" in eqs.omitted


def test_regimes():
    assert classify_regime(pattern_params()).tag == "weak"
    r = classify_regime(spike_params())
    assert r.tag == "weak"
    np.testing.assert_allclose(r.ratios, (0.25, 2.0, 4.0))
    assert classify_regime(pattern_params().with_(b1=0.5)).tag == "none"  # b1/b2 == c1/c2
    strong = pattern_params().with_(c1=2.0, b1=0.5)
    assert classify_regime(strong).tag == "strong"


def test_degenerate_coexistence_reported():
    with pytest.raises(NoCoexistence, match="degenerate"):
        coexistence(pattern_params().with_(b1=0.5))


@settings(max_examples=100, deadline=None)
@given(weak_params())
def test_coexistence_residual_and_sign(p):
    e = coexistence(p)
    f, g = eval_kinetics(p, e.u, e.v)
    assert abs(f) <= 1e-12 * max(1, e.u, e.v)
    assert abs(g) <= 1e-12 * max(1, e.u, e.v)
    assert p.b2 * p.c1 < p.b1 * p.c2


@settings(max_examples=60, deadline=None)
@given(params())
def test_regime_chain(p):
    tag = classify_regime(p).tag
    if tag == "weak":
        assert p.b2 * p.c1 < p.b1 * p.c2
    elif tag == "strong":
        assert p.b2 * p.c1 > p.b1 * p.c2


def test_sensitivity_forms():
    lin = Sensitivity.linear(1.0, 0.5)
    assert lin(2.0) == pytest.approx(2.0)
    assert lin.d1(2.0) == pytest.approx(0.5)
    assert lin.d2(2.0) == 0.0
    tab = Sensitivity.table([0, 1, 2, 3], [1, 2, 2.5, 2.7])
    assert tab(1.0) == pytest.approx(2.0)
    h = 1e-6
    assert tab.d1(1.3) == pytest.approx((tab(1.3 + h) - tab(1.3 - h)) / (2 * h), rel=1e-6)
    assert tab.d2(1.3) == pytest.approx((tab.d1(1.3 + h) - tab.d1(1.3 - h)) / (2 * h), rel=1e-5)
    with pytest.raises(ValueError):
        Sensitivity.table([0, 1, 2], [1, -1, 1])
    assert Sensitivity.from_dict(tab.to_dict()) == tab
    assert Sensitivity.constant(2.0).scaled(1.5)(0.3) == pytest.approx(3.0)


def test_params_validation_and_round_trip():
    with pytest.raises(ValueError):
        pattern_params().with_(D1=0.0)
    p = spike_params().with_(phi=Sensitivity.linear(1, 0.2))
    assert ScaledParams.from_dict(p.to_dict()) == p
    assert math.isfinite(p.phi(0.0))
