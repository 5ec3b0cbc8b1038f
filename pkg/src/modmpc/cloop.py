"""Sampled-data closed-loop simulation and the ISE performance metric.

The plant is integrated with RK4 between sampling instants while the MPC
input is held constant. The running cost ``x'Qx + u'Ru`` is carried as an
extra integrator state so its quadrature has the same order as the state.
"""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass

import numpy as np

from modmpc import _sim_py
from modmpc.moo import ObjectiveVector
from modmpc.mpc import MpcController, OcpSpec, QpFailure
from modmpc.plants import PlantModel, ScenarioSet


def _select_integrator():
    if os.environ.get("MODMPC_KERNEL", "").lower() in ("py", "python", "numpy"):
        return None, "python"
    try:
        from modmpc._sim_kernel import integrate_interval
    except ImportError:
        return None, "python"
    return integrate_interval, "compiled"


_fast_interval, INTEGRATOR = _select_integrator()


class SimStatus(str, enum.Enum):
    CONVERGED = "Converged"
    TRUNCATED = "Truncated"
    INFEASIBLE_QP = "InfeasibleQP"
    DIVERGED = "Diverged"


FAILED = (SimStatus.INFEASIBLE_QP, SimStatus.DIVERGED)


@dataclass(frozen=True)
class SimConfig:
    """Closed-loop simulation settings.

    ``t_max=None`` means ``t_max_horizons * N * h`` for the design under
    test; ``penalty=None`` means ``1e6 * (1 + |x0|^2)``.
    """

    t_max: float | None = None
    t_max_horizons: float = 50.0
    substeps: int = 10
    tail_eps: float = 1e-9
    tail_steps: int = 10
    blowup: float = 1e6
    penalty: float | None = None

    def __post_init__(self):
        if self.t_max is not None and not self.t_max > 0:
            raise ValueError("t_max must be positive")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")
        if self.penalty is not None and not self.penalty > 0:
            raise ValueError("penalty must be positive")

    def horizon(self, spec: OcpSpec) -> float:
        return self.t_max if self.t_max is not None else self.t_max_horizons * spec.N * spec.h

    def penalty_for(self, x0) -> float:
        if self.penalty is not None:
            return self.penalty
        return 1e6 * (1.0 + float(np.dot(x0, x0)))


@dataclass
class Trajectory:
    t: np.ndarray             # substep times
    x: np.ndarray             # states at substep resolution, (len(t), n_x)
    u: np.ndarray             # applied input per sampling interval, (n_samples, n_u)
    v: np.ndarray             # running cost at each substep time
    sample_index: np.ndarray  # sampling interval each stored state belongs to
    status: SimStatus
    U: float

    def held_inputs(self) -> np.ndarray:
        """Input in force at every stored time (zero-order hold)."""
        if len(self.u) == 0:
            return np.zeros((len(self.t), self.u.shape[1]))
        return self.u[np.minimum(self.sample_index, len(self.u) - 1)]


def _interval_fn(plant: PlantModel, Q, R, cfg: SimConfig, dt: float, use_compiled: bool):
    Q = np.ascontiguousarray(Q, dtype=float)
    R = np.ascontiguousarray(R, dtype=float)
    if use_compiled and _fast_interval is not None and plant.fast_rhs is not None:
        rid, params, e_s, u_s = plant.fast_rhs

        def step(s, u, xs_out, v_out):
            return _fast_interval(rid, params, e_s, u_s, s, np.ascontiguousarray(u, dtype=float),
                                  dt, cfg.substeps, Q, R, cfg.blowup, xs_out, v_out)
    else:
        def step(s, u, xs_out, v_out):
            return _sim_py.integrate_interval(plant.f, s, u, dt, cfg.substeps, Q, R,
                                              cfg.blowup, xs_out, v_out)
    return step


def simulate(plant: PlantModel, spec: OcpSpec, x0, cfg: SimConfig = SimConfig(),
             controller: MpcController | None = None, compiled: bool = True) -> Trajectory:
    """Run the closed loop from *x0* and return the trajectory with its ISE.

    Failures (QP without a solution, state blow-up) are reported through
    the trajectory status and cost the configured penalty. ``compiled=False``
    forces the pure-Python integrator.
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape != (plant.n_x,) or not np.all(np.isfinite(x0)):
        raise ValueError(f"x0 must be a finite vector of length {plant.n_x}")
    ctrl = controller or MpcController(spec)
    Q, R = spec.Q, spec.R
    n_x = plant.n_x
    h = spec.h
    dt = h / cfg.substeps
    n_samples = int(np.floor(cfg.horizon(spec) / h + 1e-9))
    step = _interval_fn(plant, Q, R, cfg, dt, compiled)
    m = cfg.substeps
    cap = n_samples * m + 1
    t_buf = np.empty(cap)
    x_buf = np.empty((cap, n_x))
    v_buf = np.empty(cap)
    k_buf = np.empty(cap, dtype=int)
    t_buf[0], x_buf[0], v_buf[0], k_buf[0] = 0.0, x0, float(x0 @ Q @ x0), 0
    n = 1
    us = []
    s = np.append(x0, 0.0)
    quiet = 0
    status = SimStatus.TRUNCATED
    for i in range(n_samples):
        x = s[:n_x]
        try:
            u = ctrl.control(x)
        except QpFailure:
            status = SimStatus.INFEASIBLE_QP
            break
        v_i = float(x @ Q @ x + u @ R @ u)
        # the stored state at t_i now carries the input switched on at t_i
        v_buf[n - 1] = v_i
        k_buf[n - 1] = i
        us.append(u)
        quiet = quiet + 1 if v_i < cfg.tail_eps else 0
        done, diverged = step(s, u, x_buf[n:n + m], v_buf[n:n + m])
        t_buf[n:n + done] = i * h + np.arange(1, done + 1) * dt
        k_buf[n:n + done] = i
        n += done
        if diverged:
            status = SimStatus.DIVERGED
            break
        if quiet >= cfg.tail_steps:
            status = SimStatus.CONVERGED
            break
    if status in FAILED:
        U = cfg.penalty_for(x0)
    else:
        U = float(s[n_x])
    return Trajectory(t_buf[:n].copy(), x_buf[:n].copy(), np.array(us).reshape(-1, plant.n_u),
                      v_buf[:n].copy(), k_buf[:n].copy(), status, U)


def performance(plant: PlantModel, spec: OcpSpec, scenarios: ScenarioSet,
                cfg: SimConfig = SimConfig()) -> float:
    """Weighted closed-loop cost ``V = sum_i w_i U(x0_i)`` in scenario order."""
    ctrl = MpcController(spec)
    U = [simulate(plant, spec, x0, cfg, controller=ctrl).U for x0 in scenarios.X0]
    return weighted_sum(scenarios.weights, U)


def weighted_sum(weights, values) -> float:
    total = 0.0
    for w, U in zip(weights, values):
        total += w * U
    return total


def round_significant(x: float, digits: int = 10) -> float:
    """Round to *digits* significant figures (ties between equal-V designs)."""
    if x == 0 or not np.isfinite(x):
        return float(x)
    return float(f"{x:.{digits - 1}e}")


class DesignEvaluator:
    """``p = (h, N) -> (V, eta)`` for one plant, OCP template and scenario set.

    V is rounded to ``v_digits`` significant digits so that designs whose
    closed-loop costs differ only by round-off compare as equal.
    """

    def __init__(self, plant: PlantModel, spec: OcpSpec, scenarios: ScenarioSet,
                 resource, cfg: SimConfig = SimConfig(), v_digits: int = 10):
        self.plant = plant
        self.spec = spec
        self.scenarios = scenarios
        self.resource = resource
        self.cfg = cfg
        self.v_digits = v_digits

    def performance(self, h: float, N: int) -> float:
        return performance(self.plant, self.spec.with_design(h, N), self.scenarios, self.cfg)

    def __call__(self, p):
        h, N = float(p[0]), int(p[1])
        V = round_significant(self.performance(h, N), self.v_digits)
        return ObjectiveVector(V, self.resource.eta(h, N))
