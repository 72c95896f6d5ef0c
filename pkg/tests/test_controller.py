import inspect
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from atl.controller import (
    CORE_FUNCTIONS,
    Controller,
    ControllerConfig,
    CoreFunctionSpec,
    FilterConfig,
    GateFunction,
    Variant,
    adaptive_rates,
    check_bounding_inequalities,
    control_action,
    core_phi,
    filtered_error,
    phi_vector,
    routh_hurwitz,
)
from atl.errors import DomainError, SpecError
from atl.nussbaum import exp_quad_cos


def config(variant=Variant.FAULT_TOLERANT_NUSSBAUM, k=1.0, sigma1=1.0, sigma2=0.1, lambdas=(10.0,),
           core="unit", gate=None):
    return ControllerConfig(variant, k, sigma1, sigma2, FilterConfig(lambdas), CORE_FUNCTIONS[core],
                            gate or GateFunction(), exp_quad_cos() if variant.uses_nussbaum else None)


# --- filter ---------------------------------------------------------------------

def test_routh_hurwitz_examples():
    assert routh_hurwitz([1, 10])            # root -10
    assert routh_hurwitz([1, 3, 2])          # roots -1, -2
    assert not routh_hurwitz([1, -3, 2])     # roots 1, 2
    assert not routh_hurwitz([1, 0, 1])      # roots +-i
    assert routh_hurwitz([1, 6, 11, 6])      # roots -1, -2, -3
    assert not routh_hurwitz([1, 1, 1, 5])
    assert routh_hurwitz([-1, -3, -2])
    assert routh_hurwitz([4])
    with pytest.raises(DomainError):
        routh_hurwitz([0, 1])


@settings(max_examples=300, deadline=None)
@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=1, max_size=4))
def test_routh_hurwitz_agrees_with_roots(roots):
    roots = [r for r in roots if abs(r) > 1e-3]
    if not roots:
        return
    coeffs = np.poly(roots)
    assert routh_hurwitz([float(c) for c in coeffs]) == all(r < 0 for r in roots)


def test_filter_rejects_non_hurwitz_coefficients():
    assert FilterConfig((10.0,)).order == 2
    assert FilterConfig((2.0, 3.0)).order == 3
    with pytest.raises(DomainError, match="Hurwitz"):
        FilterConfig((-1.0,))
    with pytest.raises(DomainError):
        FilterConfig((2.0, -3.0))


def test_filtered_error_examples():
    assert np.allclose(filtered_error(FilterConfig((10.0,)), [[0.1, 0.2], [0.0, 0.0]]), [1.0, 2.0])
    assert np.array_equal(filtered_error(FilterConfig((10.0,)), np.zeros((2, 2))), np.zeros(2))
    assert np.allclose(filtered_error(FilterConfig((2.0, 3.0)), [[1.0], [1.0], [1.0]]), [6.0])


def test_phi_vector_examples():
    assert np.allclose(phi_vector(FilterConfig((10.0,)), [[5.0, 5.0], [0.3, -0.1]]), [3.0, -1.0])
    assert np.array_equal(phi_vector(FilterConfig((10.0,)), np.zeros((2, 2))), np.zeros(2))
    assert np.allclose(phi_vector(FilterConfig((2.0, 3.0)), [[9.0], [1.0], [2.0]]), [8.0])


# --- core function --------------------------------------------------------------

def test_core_function_examples_at_rest():
    z2, z3 = np.zeros(2), np.zeros(3)
    assert core_phi(CORE_FUNCTIONS["two_channel"], np.zeros((2, 2)), z2, z2) == 2.0
    assert core_phi(CORE_FUNCTIONS["planar_3link"], np.zeros((2, 3)), z3, z3) == 2.0
    always_one = CoreFunctionSpec(lambda b: 1.0, lambda b: 1.0, lambda b: 1.0)
    assert core_phi(always_one, np.zeros((2, 1)), np.zeros(1), np.zeros(1)) == 2.0


def test_core_function_value_away_from_rest():
    blocks = np.array([[3.0, 4.0], [0.0, 2.0]])  # |x1| = 5, |x2| = 2
    Phi, s = np.array([1.0, 0.0]), np.array([0.0, 4.0])
    # phi_f = 5*2 + 2 + 1 = 13; phi = 1*(1 + 13 + 1) + 0.5*4
    assert core_phi(CORE_FUNCTIONS["two_channel"], blocks, Phi, s) == pytest.approx(17.0)


def test_negative_core_component_is_rejected():
    bad = CoreFunctionSpec(lambda b: -0.1, lambda b: 1.0, lambda b: 1.0, "bad")
    with pytest.raises(SpecError, match="negative"):
        core_phi(bad, np.zeros((2, 1)), np.zeros(1), np.zeros(1))


# --- gate -----------------------------------------------------------------------

def test_gate_values_and_integral_bound():
    g = GateFunction()
    assert g(0.0) == 0.5 and g(2.0) == pytest.approx(0.5 * math.exp(-1.0))
    assert g.nu_bar == 1.0 and g.integrable
    t = np.linspace(0.0, 60.0, 60001)
    nu = np.array([g(x) for x in t])
    assert np.all(nu >= 0)
    quad = float(np.sum(0.5 * (nu[1:] + nu[:-1]) * np.diff(t)))
    # trapezoid error bound: horizon * dt^2 / 12 * max |nu''|
    err = 60.0 * 1e-6 / 12.0 * 0.5 * 0.25
    assert quad <= g.nu_bar + err
    assert quad == pytest.approx(g.integral(60.0), rel=1e-7)


def test_constant_gate_is_flagged_non_integrable():
    g = GateFunction("constant", 0.5)
    assert not g.integrable and g.nu_bar == math.inf
    assert g(123.0) == 0.5
    assert GateFunction("constant", 0.0).integrable
    for bad in (dict(kind="ramp"), dict(amplitude=-1.0), dict(rate=0.0)):
        with pytest.raises(DomainError):
            GateFunction(**bad)


# --- control law and rates ------------------------------------------------------

def test_zero_error_gives_zero_action():
    u, eta, _ = control_action(config(), 0.0, 3.0, np.zeros(2), 2.0, 0.5)
    assert np.array_equal(u, np.zeros(2)) and np.array_equal(eta, np.zeros(2))


def test_zero_estimate_gives_pure_proportional_term():
    s = np.array([0.3, -1.7])
    _, eta, _ = control_action(config(k=100.0), 1.0, 0.0, s, 5.0, 0.1)
    assert np.array_equal(eta, 100.0 * s)


def test_hand_computed_action():
    # hbar(0) = exp(0) cos(0) = 1
    u, eta, hbar = control_action(config(k=1.0), 0.0, 1.0, np.array([1.0, 0.0]), 2.0, 1.0)
    assert hbar == 1.0
    assert eta == pytest.approx([7.0 / 3.0, 0.0], rel=1e-15)
    assert np.array_equal(u, eta)


def test_nussbaum_gain_multiplies_eta():
    cfg = config()
    s = np.array([0.2, 0.1])
    u, eta, hbar = control_action(cfg, 2.5, 0.3, s, 1.5, 0.2)
    assert hbar == pytest.approx(math.exp(0.07 * 2.5 ** 2) * math.cos(0.1 * math.pi * 2.5), rel=1e-12)
    assert np.allclose(u, hbar * eta, rtol=0, atol=1e-15)


def test_known_direction_law_negates_eta():
    cfg = config(Variant.KNOWN_DIRECTION_SIMPLIFIED)
    u, eta, hbar = control_action(cfg, 0.0, 1.0, np.array([1.0, 0.0]), 2.0, 1.0)
    assert math.isnan(hbar)
    assert np.array_equal(u, -eta)
    zd, _ = adaptive_rates(cfg, np.array([1.0, 0.0]), eta, 2.0, 1.0)
    assert zd == 0.0


def test_zero_over_zero_takes_the_limit():
    u, eta, _ = control_action(config(), 0.0, 1.0, np.zeros(2), 2.0, 0.0)
    assert np.array_equal(eta, np.zeros(2))
    assert adaptive_rates(config(), np.zeros(2), eta, 2.0, 0.0) == (0.0, 0.0)


def test_rate_examples():
    cfg = config(k=1.0, sigma1=1.0, sigma2=0.1)
    assert adaptive_rates(cfg, np.zeros(2), np.zeros(2), 2.0, 0.5) == (0.0, 0.0)
    s = np.array([1.0, 0.0])
    _, eta, _ = control_action(cfg, 0.0, 0.0, s, 2.0, 1.0)
    zd, td = adaptive_rates(cfg, s, eta, 2.0, 1.0)
    assert zd == 1.0
    assert td == pytest.approx(0.1 * 4.0 / 3.0, rel=1e-15)


small = st.floats(-5, 5, allow_nan=False)


@settings(max_examples=500, deadline=None)
@given(st.lists(small, min_size=2, max_size=2), st.floats(0, 10), st.floats(0, 20), st.floats(0, 2))
def test_rates_are_nonnegative(s, theta, phi, nu):
    cfg = config(k=3.0, sigma1=0.7, sigma2=0.2)
    s = np.array(s)
    _, eta, _ = control_action(cfg, 1.0, theta, s, phi, nu)
    zd, td = adaptive_rates(cfg, s, eta, phi, nu)
    assert zd >= 0 and td >= 0


@settings(max_examples=300, deadline=None)
@given(st.lists(small, min_size=3, max_size=3), st.floats(-4, 4, allow_nan=False))
def test_eta_is_linear_in_s_without_adaptation(s, a):
    cfg = config(k=7.0)
    s = np.array(s)
    e1 = control_action(cfg, 0.0, 0.0, a * s, 2.0, 0.3)[1]
    e2 = control_action(cfg, 0.0, 0.0, s, 2.0, 0.3)[1]
    assert np.allclose(e1, a * e2, atol=1e-12)


def test_config_validation_messages():
    with pytest.raises(DomainError, match="k must be positive"):
        config(k=-1.0)
    with pytest.raises(DomainError, match="sigma1"):
        config(sigma1=0.0)
    with pytest.raises(DomainError, match="sigma2"):
        config(sigma2=-0.1)
    with pytest.raises(DomainError, match="Nussbaum"):
        ControllerConfig(Variant.FAULT_FREE_NUSSBAUM, 1.0, 1.0, 1.0, FilterConfig((1.0,)),
                         CORE_FUNCTIONS["unit"], GateFunction(), None)
    with pytest.raises(DomainError, match="coefficients"):
        Controller(config(lambdas=(2.0, 3.0)), 2, 2)


def test_controller_only_sees_measurements():
    params = list(inspect.signature(Controller.evaluate).parameters)
    assert params == ["self", "t", "xbar", "yref", "zeta", "theta_hat"]


def test_controller_evaluate_assembles_the_pieces():
    cfg = config(k=2.0, core="two_channel")
    ctrl = Controller(cfg, 2, 2)
    xbar = np.array([0.3, 0.1, -0.2, 0.4])
    yref = np.array([[0.4, 0.25], [0.0, 0.25]])
    out = ctrl.evaluate(0.0, xbar, yref, 0.0, 0.5)
    e = xbar.reshape(2, 2) - yref
    assert np.allclose(out.e, e[0])
    assert np.allclose(out.s, 10.0 * e[0] + e[1])
    assert np.allclose(out.Phi, 10.0 * e[1])
    assert out.nu == 0.5
    u, eta, _ = control_action(cfg, 0.0, 0.5, out.s, out.phi, 0.5)
    assert np.array_equal(out.u, u)


# --- bounding inequalities ------------------------------------------------------

def test_bounding_examples():
    r = check_bounding_inequalities([3.0, 4.0], 0.0)
    assert r.ok and r.rhs_za == 5.0 and r.rhs_zb == 5.0
    r = check_bounding_inequalities([0.0, 0.0], 1.0)
    assert r.ok and r.rhs_za == 1.0 and r.rhs_zb == 1.0
    r = check_bounding_inequalities([1.0, 0.0], 1.0)
    assert r.rhs_za == pytest.approx(1.5) and r.rhs_zb == pytest.approx(1.0 / math.sqrt(2) + 1.0)
    assert r.ok
    with pytest.raises(DomainError):
        check_bounding_inequalities([1.0], -0.1)


@settings(max_examples=10_000, deadline=None)
@given(st.sampled_from([1, 2, 3, 6]).flatmap(
    lambda d: st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=d, max_size=d)),
    st.floats(0.0, 10.0, allow_nan=False))
def test_bounding_inequalities_hold(vec, nu):
    assert check_bounding_inequalities(vec, nu).ok
