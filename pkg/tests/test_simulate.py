import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from atl.analysis import error_norm, is_nondecreasing
from atl.controller import CORE_FUNCTIONS, ControllerConfig, FilterConfig, GateFunction, Variant
from atl.errors import DomainError
from atl.faults import healthy, piecewise_constant
from atl.nussbaum import exp_quad_cos
from atl.plant import constant_reference, make_plant
from atl.simulate import Scenario, Verdict, augment_state, run, split_state, trace_columns

from conftest import cached_run, scenario


def integrator_scenario(variant=Variant.KNOWN_DIRECTION_SIMPLIFIED, x0=(0.0, 0.0), ref=0.0, t_end=1.0,
                        h=1e-3, faults=None, theta0=0.0):
    cfg = ControllerConfig(variant, 5.0, 1.0, 0.1, FilterConfig((2.0,)), CORE_FUNCTIONS["unit"],
                           GateFunction(), exp_quad_cos() if variant.uses_nussbaum else None)
    return Scenario("integrator", make_plant("custom", m=1, n=2), cfg, constant_reference([ref]),
                    faults or healthy(1), np.array(x0, dtype=float), theta0=theta0, t_end=t_end, h=h)


def test_equilibrium_stays_put():
    tr = run(integrator_scenario(t_end=2.0))
    assert tr.completed and len(tr) == 2001
    assert np.array_equal(tr.e, np.zeros_like(tr.e))
    assert np.array_equal(tr.u, np.zeros_like(tr.u))
    assert np.all(tr.theta_hat == 0.0)


def test_simple_loop_converges():
    tr = run(integrator_scenario(x0=(1.0, 0.0), t_end=10.0))
    assert tr.completed
    assert error_norm(tr)[-1] < 1e-3
    assert is_nondecreasing(tr.theta_hat)


@pytest.mark.parametrize("m,n,dim", [(2, 2, 6), (3, 2, 8), (1, 3, 5)])
def test_flat_state_dimension(m, n, dim):
    y = augment_state(np.arange(m * n, dtype=float), 1.5, 0.25)
    assert y.shape == (dim,)
    x, z, th = split_state(y, m * n)
    assert np.array_equal(x, np.arange(m * n)) and z == 1.5 and th == 0.25


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=9),
       st.floats(0, 1e3), st.floats(0, 1e3))
def test_augment_split_round_trip(x, z, th):
    x = np.array(x)
    x2, z2, th2 = split_state(augment_state(x, z, th), len(x))
    assert np.array_equal(x, x2) and z2 == z and th2 == th


def test_split_rejects_wrong_size():
    with pytest.raises(DomainError):
        split_state(np.zeros(5), 4)


def test_trace_column_layout():
    cols = trace_columns(2, 2)
    assert cols[:5] == ["t", "x_1_1", "x_1_2", "x_2_1", "x_2_2"]
    assert cols.index("phi") == 13 and cols[-1] == "u_a_2"
    assert len(cols) == 1 + 4 + 4 * 2 + 5 + 5 * 2


def test_scenario_validation():
    with pytest.raises(DomainError, match="initial state"):
        run(integrator_scenario(x0=(0.0,)))
    with pytest.raises(DomainError, match="theta_hat"):
        run(integrator_scenario(theta0=-1.0))
    bad = piecewise_constant(1, [0.5], [[1.0], [1.5]])
    with pytest.raises(DomainError, match="PLOE"):
        run(integrator_scenario(faults=bad))


def test_runs_are_deterministic():
    a = run(scenario("paper_iv_b_bpos", "integrator.t_end=0.5"))
    b = run(scenario("paper_iv_b_bpos", "integrator.t_end=0.5"))
    assert np.array_equal(a.data, b.data)


def test_fault_switch_is_a_grid_node_and_no_stage_mixes_segments():
    sc = scenario("paper_iv_b_bpos", "integrator.t_end=3.5")
    tr = run(sc, instrument=True)
    assert tr.completed
    t = tr.t
    k = int(np.nonzero(t == 3.0)[0][0])
    seg = tr.stage_segments
    assert np.all(seg == seg[:, :1])  # every stage of a step reads one segment
    steps_before = t[:-1] < 3.0
    assert np.all(seg[steps_before[: len(seg)], 0] == 0)
    assert np.all(seg[~steps_before[: len(seg)], 0] == 1)
    # record at the switch node uses the left segment, the next one the right
    assert tr.rho[k, 1] == pytest.approx(1.0 - 0.2 * math.tanh(3.0), abs=1e-15)
    assert tr.rho[k + 1, 1] == 0.2
    # u_a jumps at the node: rho drops from ~0.99 to 0.2 on channel 2
    jump = abs(tr.u_a[k + 1, 1] - tr.u_a[k, 1])
    typical = np.max(np.abs(np.diff(tr.u_a[k - 50: k, 1])))
    assert jump > 10 * typical


def test_robot_switch_node_at_five_seconds():
    sc = scenario("paper_v_b", "integrator.t_end=5.2")
    tr = run(sc, instrument=True)
    k = int(np.nonzero(tr.t == 5.0)[0][0])
    assert tr.rho[k, 0] == pytest.approx(1.0 - 0.2 * math.tanh(5.0), abs=1e-15)
    assert tr.rho[k + 1, 0] == pytest.approx(0.8 + 0.05 * math.sin(tr.t[k + 1]), abs=1e-15)
    assert np.all(tr.stage_segments == tr.stage_segments[:, :1])


def test_too_coarse_step_is_reported_not_raised():
    # the two-channel loop is stiff for RK4 at h = 1e-3 (see README)
    tr = run(scenario("paper_iv_b_bpos", "integrator.h=1e-3"))
    assert tr.verdict in (Verdict.DIVERGED, Verdict.GAIN_OVERFLOW)
    assert tr.verdict_time is not None and tr.verdict_time < 1.0
    assert np.all(np.isfinite(tr.data))
    assert "zeta=" in tr.message or "diverg" in tr.message


def test_divergence_cap_is_enforced():
    sc = integrator_scenario(x0=(1.0, 0.0), t_end=5.0)
    sc.plant = sc.plant.with_direction(-1)  # simplified law pushes the wrong way
    sc.divergence_cap = 10.0
    tr = run(sc)
    assert tr.verdict is Verdict.DIVERGED
    assert "divergence cap" in tr.message


def test_adaptive_states_are_monotone_on_a_short_run():
    _, tr = cached_run("paper_iv_b_bpos", "integrator.t_end=6")
    assert tr.completed
    assert is_nondecreasing(tr.zeta) and is_nondecreasing(tr.theta_hat)
    assert np.all(tr.theta_hat >= 0) and tr.clamp_events == 0


@pytest.mark.slow
def test_halving_the_step_changes_final_error_by_under_one_percent():
    _, coarse = cached_run("paper_iv_b_bpos")
    _, fine = cached_run("paper_iv_b_bpos", "integrator.h=1.25e-4")
    a, b = error_norm(coarse)[-1], error_norm(fine)[-1]
    assert abs(a - b) / b < 0.01
