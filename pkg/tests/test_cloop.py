import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from modmpc import cloop
from modmpc.cloop import (DesignEvaluator, SimConfig, SimStatus, performance, round_significant,
                          simulate, weighted_sum)
from modmpc.mpc import OcpSpec
from modmpc.plants import ScenarioSet, builtin, from_config
from modmpc.resource import ResourceModel

PHI = (1 + math.sqrt(5)) / 2


def spec_for(plant, h=0.2, N=5, Q=None, R=None, **kw):
    return OcpSpec(A=plant.A, B=plant.B, Q=np.eye(plant.n_x) if Q is None else Q,
                   R=np.eye(plant.n_u) if R is None else R,
                   x_lb=kw.get("x_lb", plant.x_lb), x_ub=kw.get("x_ub", plant.x_ub),
                   u_lb=kw.get("u_lb", plant.u_lb), u_ub=kw.get("u_ub", plant.u_ub), h=h, N=N)


def integrator():
    return from_config({"custom": {"n_x": 1, "n_u": 1, "A": [[0.0]], "B": [[1.0]]}})


@pytest.mark.parametrize("name", ["double_integrator", "pendulum"])
def test_origin_stays_put(name):
    p = builtin(name)
    tr = simulate(p, spec_for(p), np.zeros(2))
    assert tr.status is SimStatus.CONVERGED
    assert tr.U == 0.0
    assert np.all(tr.x == 0.0)


def test_scalar_geometric_series_oracle():
    p = integrator()
    tr = simulate(p, spec_for(p, h=1.0, N=5), [1.0])
    K = PHI / (1 + PHI)
    # x(t) is linear within each interval, x_k = (1-K)^k
    per_interval = (1 - K + K * K / 3) + K * K
    oracle = per_interval / (1 - (1 - K) ** 2)
    assert tr.status is SimStatus.CONVERGED
    assert tr.U == pytest.approx(oracle, rel=0.05)
    assert tr.U == pytest.approx(oracle, rel=1e-6)
    np.testing.assert_allclose(tr.u[:4, 0], -K * (1 - K) ** np.arange(4), atol=1e-6)


def test_infeasible_qp_costs_penalty():
    p = builtin("double_integrator")
    spec = spec_for(p, h=0.1, N=3, x_lb=-1.0, x_ub=1.0, u_lb=-0.01, u_ub=0.01)
    x0 = np.array([0.9, 5.0])
    tr = simulate(p, spec, x0)
    assert tr.status is SimStatus.INFEASIBLE_QP
    assert tr.U == pytest.approx(1e6 * (1 + x0 @ x0))
    assert simulate(p, spec, x0, SimConfig(penalty=42.0)).U == 42.0


def test_divergence_costs_penalty():
    p = from_config({"custom": {"n_x": 1, "n_u": 1, "A": [[1.0]], "B": [[1.0]]}})
    spec = spec_for(p, h=0.5, N=3, x_lb=-np.inf, x_ub=np.inf, u_lb=-0.01, u_ub=0.01)
    tr = simulate(p, spec, [10.0], SimConfig(t_max=40.0))
    assert tr.status is SimStatus.DIVERGED
    assert tr.U == pytest.approx(1e6 * 101)


def test_truncation():
    p = builtin("double_integrator")
    tr = simulate(p, spec_for(p), [1.0, 0.0], SimConfig(t_max=1.0))
    assert tr.status is SimStatus.TRUNCATED
    assert tr.t[-1] == pytest.approx(1.0)
    assert 0 < tr.U < 1e3


def test_trajectory_layout():
    p = builtin("pendulum")
    cfg = SimConfig(t_max=2.0, substeps=4)
    tr = simulate(p, spec_for(p, h=0.1, N=4), [0.3, 0.0], cfg)
    assert tr.x.shape == (len(tr.t), 2)
    assert len(tr.t) == 4 * len(tr.u) + 1
    np.testing.assert_allclose(np.diff(tr.t), 0.025)
    held = tr.held_inputs()
    # zero-order hold: the input is constant over each sampling interval
    for k in range(len(tr.u)):
        assert np.all(held[tr.sample_index == k] == tr.u[k])
    assert np.all(np.isfinite(tr.x))


@pytest.mark.parametrize("name, x0", [("double_integrator", [1.0, -0.5]), ("pendulum", [0.4, 0.2])])
def test_substep_refinement(name, x0):
    p = builtin(name)
    spec = spec_for(p, h=0.2, N=5)
    coarse = simulate(p, spec, x0, SimConfig(substeps=10))
    fine = simulate(p, spec, x0, SimConfig(substeps=20))
    assert coarse.status is SimStatus.CONVERGED
    assert abs(fine.U - coarse.U) < 0.01 * coarse.U


@pytest.mark.parametrize("name", ["double_integrator", "pendulum"])
def test_backends_agree_bitwise(name):
    p = builtin(name)
    spec = spec_for(p, h=0.15, N=6)
    a = simulate(p, spec, [0.5, -0.3], compiled=True)
    b = simulate(p, spec, [0.5, -0.3], compiled=False)
    assert a.U == b.U
    np.testing.assert_array_equal(a.x, b.x)


def test_shifted_and_custom_plants_use_compiled_path():
    shifted = from_config({"name": "double_integrator", "setpoint": {"e_s": [1, 0], "u_s": [0]}})
    spec = spec_for(shifted, h=0.2, N=4)
    a = simulate(shifted, spec, [0.5, 0.0], compiled=True)
    b = simulate(shifted, spec, [0.5, 0.0], compiled=False)
    assert a.U == b.U


def test_determinism():
    p = builtin("pendulum")
    spec = spec_for(p, h=0.1, N=8)
    assert simulate(p, spec, [0.5, 0.1]).U == simulate(p, spec, [0.5, 0.1]).U


# squares of tinier states underflow to zero
coord = st.one_of(st.just(0.0), st.floats(1e-100, 2), st.floats(-2, -1e-100))


@settings(max_examples=20, deadline=None)
@given(coord, coord)
def test_cost_non_negative(a, b):
    p = builtin("double_integrator")
    tr = simulate(p, spec_for(p, h=0.3, N=3), [a, b], SimConfig(t_max=10.0))
    assert tr.U >= 0
    assert (tr.U == 0) == (a == 0 and b == 0)


def test_weighted_sum_examples():
    assert weighted_sum((0.5, 0.5), (2.0, 4.0)) == 3.0
    p = builtin("double_integrator")
    spec = spec_for(p)
    assert performance(p, spec, ScenarioSet([[0, 0], [0, 0]])) == 0.0
    single = performance(p, spec, ScenarioSet([[1.0, 0.0]]))
    assert single == simulate(p, spec, [1.0, 0.0]).U


def test_performance_monotone_in_scenario_cost():
    p = builtin("double_integrator")
    spec = spec_for(p)
    near = performance(p, spec, ScenarioSet([[0.5, 0.0], [0.0, 0.5]]))
    far = performance(p, spec, ScenarioSet([[1.0, 0.0], [0.0, 0.5]]))
    assert far > near


def test_round_significant():
    assert round_significant(1.23456789012345) == 1.234567890
    assert round_significant(0.0) == 0.0
    assert round_significant(123456789012.0, 3) == 1.23e11


def test_design_evaluator():
    p = builtin("double_integrator")
    m = ResourceModel([3.5e-3, 1.3e-4])
    ev = DesignEvaluator(p, spec_for(p), ScenarioSet([[1.0, 0.0]]), m, SimConfig(t_max=30.0))
    V, eta = ev((0.2, 4))
    assert eta == m.eta(0.2, 4)
    assert V == round_significant(ev.performance(0.2, 4))


def test_python_fallback_selected_by_env(monkeypatch):
    monkeypatch.setenv("MODMPC_KERNEL", "python")
    fn, name = cloop._select_integrator()
    assert fn is None and name == "python"
