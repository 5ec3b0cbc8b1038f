"""Nonlinear plant models with an equilibrium at the origin.

Two desk-scale builtins are provided (``double_integrator`` and
``pendulum``); other plants can be described by a JSON config, see
:func:`from_config`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

VectorField = Callable[[np.ndarray, np.ndarray], np.ndarray]

BUILTINS = ("double_integrator", "pendulum")

# vector-field ids understood by the compiled integrator
RHS_LINEAR = 0
RHS_DOUBLE_INTEGRATOR = 1
RHS_PENDULUM = 2

# pendulum constants: g/l normalized to 1, viscous damping 0.1
PENDULUM_GRAVITY = 1.0
PENDULUM_DAMPING = 0.1


def jacobians(f: VectorField, x, u, step: float = 1e-6):
    """Central finite-difference Jacobians ``(df/dx, df/du)`` at ``(x, u)``."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    f0 = np.asarray(f(x, u), dtype=float)
    A = np.zeros((f0.size, x.size))
    B = np.zeros((f0.size, u.size))
    for j in range(x.size):
        e = np.zeros(x.size)
        e[j] = step
        A[:, j] = (np.asarray(f(x + e, u)) - np.asarray(f(x - e, u))) / (2 * step)
    for j in range(u.size):
        e = np.zeros(u.size)
        e[j] = step
        B[:, j] = (np.asarray(f(x, u + e)) - np.asarray(f(x, u - e))) / (2 * step)
    return A, B


@dataclass(frozen=True, eq=False)
class PlantModel:
    name: str
    f: VectorField
    A: np.ndarray
    B: np.ndarray
    x_lb: np.ndarray
    x_ub: np.ndarray
    u_lb: np.ndarray
    u_ub: np.ndarray
    meta: dict = field(default_factory=dict)
    # (rhs_id, params, e_s, u_s) for the compiled integrator, None if unknown
    fast_rhs: tuple | None = None

    def __post_init__(self):
        for attr in ("A", "B", "x_lb", "x_ub", "u_lb", "u_ub"):
            object.__setattr__(self, attr, np.asarray(getattr(self, attr), dtype=float))
        object.__setattr__(self, "A", np.atleast_2d(self.A))
        object.__setattr__(self, "B", np.atleast_2d(self.B))
        n_x, n_u = self.B.shape
        if self.A.shape != (n_x, n_x):
            raise ValueError(f"A{self.A.shape} and B{self.B.shape} disagree")
        if self.x_lb.shape != (n_x,) or self.x_ub.shape != (n_x,):
            raise ValueError("state bounds must have length n_x")
        if self.u_lb.shape != (n_u,) or self.u_ub.shape != (n_u,):
            raise ValueError("input bounds must have length n_u")
        f0 = np.asarray(self.f(np.zeros(n_x), np.zeros(n_u)), dtype=float)
        if np.max(np.abs(f0), initial=0.0) > 1e-8:
            raise ValueError(f"origin is not an equilibrium of {self.name}: f(0,0)={f0}")

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]


def _double_integrator_rhs(x, u):
    return np.array([x[1], u[0]])


def _pendulum_rhs(x, u):
    return np.array([x[1], PENDULUM_GRAVITY * math.sin(x[0]) - PENDULUM_DAMPING * x[1] + u[0]])


def _fast(rhs_id, params, n_x, n_u, e_s=None, u_s=None):
    return (
        rhs_id,
        np.ascontiguousarray(params, dtype=float),
        np.zeros(n_x) if e_s is None else np.ascontiguousarray(e_s, dtype=float),
        np.zeros(n_u) if u_s is None else np.ascontiguousarray(u_s, dtype=float),
    )


def builtin(name: str) -> PlantModel:
    """Return one of the builtin plants by name."""
    if name == "double_integrator":
        return PlantModel(
            "double_integrator", _double_integrator_rhs,
            A=[[0.0, 1.0], [0.0, 0.0]], B=[[0.0], [1.0]],
            x_lb=[-5.0, -5.0], x_ub=[5.0, 5.0], u_lb=[-2.0], u_ub=[2.0],
            fast_rhs=_fast(RHS_DOUBLE_INTEGRATOR, [], 2, 1),
        )
    if name == "pendulum":
        return PlantModel(
            "pendulum", _pendulum_rhs,
            A=[[0.0, 1.0], [PENDULUM_GRAVITY, -PENDULUM_DAMPING]], B=[[0.0], [1.0]],
            x_lb=[-1.2, -4.0], x_ub=[1.2, 4.0], u_lb=[-4.0], u_ub=[4.0],
            fast_rhs=_fast(RHS_PENDULUM, [PENDULUM_GRAVITY, PENDULUM_DAMPING], 2, 1),
        )
    raise KeyError(f"unknown builtin plant {name!r}; choose from {BUILTINS}")


def shift(model: PlantModel, e_s, u_s=None, tol: float = 1e-8) -> PlantModel:
    """Move the equilibrium ``(e_s, u_s)`` of *model* to the origin.

    The new state is ``x = e - e_s`` and the new input ``v = u - u_s``;
    bounds shift by the same offsets and the linearization is taken at the
    setpoint.
    """
    e_s = np.asarray(e_s, dtype=float).reshape(-1)
    u_s = np.zeros(model.n_u) if u_s is None else np.asarray(u_s, dtype=float).reshape(-1)
    if e_s.shape != (model.n_x,) or u_s.shape != (model.n_u,):
        raise ValueError("setpoint dimensions do not match the plant")
    resid = np.asarray(model.f(e_s, u_s), dtype=float)
    if np.max(np.abs(resid)) > tol:
        raise ValueError(f"setpoint is not an equilibrium: f(e_s, u_s) = {resid}")
    if not np.any(e_s) and not np.any(u_s):
        return model
    f0 = model.f

    def f(x, u):
        return np.asarray(f0(x + e_s, u + u_s), dtype=float)

    A, B = jacobians(f0, e_s, u_s)
    fast = None
    if model.fast_rhs is not None:
        rid, params, e0, u0 = model.fast_rhs
        fast = _fast(rid, params, model.n_x, model.n_u, e0 + e_s, u0 + u_s)
    return PlantModel(
        f"{model.name}@shifted", f, A, B,
        model.x_lb - e_s, model.x_ub - e_s, model.u_lb - u_s, model.u_ub - u_s,
        meta={**model.meta, "e_s": e_s.tolist(), "u_s": u_s.tolist()},
        fast_rhs=fast,
    )


def _linear_rhs(A, B):
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)

    def f(x, u):
        return A @ x + B @ u

    return f


def from_config(cfg) -> PlantModel:
    """Build a plant from its JSON description.

    Accepted forms::

        "pendulum"
        {"name": "double_integrator", "setpoint": {"e_s": [...], "u_s": [...]}}
        {"custom": {"n_x": 2, "n_u": 1, "rhs": "linear",
                    "A": [[...]], "B": [[...]],
                    "bounds": {"x_lb": [...], "x_ub": [...],
                               "u_lb": [...], "u_ub": [...]}}}

    ``rhs`` names a builtin vector field (``linear``, ``double_integrator``
    or ``pendulum``). Global Lipschitz continuity of a custom plant is taken
    on trust.
    """
    if isinstance(cfg, str):
        cfg = {"name": cfg}
    if "custom" in cfg:
        c = cfg["custom"]
        n_x, n_u = int(c["n_x"]), int(c["n_u"])
        A = np.asarray(c["A"], dtype=float).reshape(n_x, n_x)
        B = np.asarray(c["B"], dtype=float).reshape(n_x, n_u)
        rhs = c.get("rhs", "linear")
        if rhs == "linear":
            f = _linear_rhs(A, B)
            fast = _fast(RHS_LINEAR, np.concatenate([A.ravel(), B.ravel()]), n_x, n_u)
        elif rhs in BUILTINS:
            ref = builtin(rhs)
            if (n_x, n_u) != (ref.n_x, ref.n_u):
                raise ValueError(f"rhs {rhs!r} needs n_x={ref.n_x}, n_u={ref.n_u}")
            f, fast = ref.f, ref.fast_rhs
        else:
            raise KeyError(f"unknown rhs id {rhs!r}")
        bnd = c.get("bounds", {})
        model = PlantModel(
            c.get("name", "custom"), f, A, B,
            bnd.get("x_lb", [-np.inf] * n_x), bnd.get("x_ub", [np.inf] * n_x),
            bnd.get("u_lb", [-np.inf] * n_u), bnd.get("u_ub", [np.inf] * n_u),
            fast_rhs=fast,
        )
    else:
        model = builtin(cfg["name"])
    sp = cfg.get("setpoint")
    if sp:
        model = shift(model, sp["e_s"], sp.get("u_s"))
    return model


@dataclass(frozen=True)
class ScenarioSet:
    """Initial states and their (normalized) weights."""

    X0: tuple
    weights: tuple

    def __init__(self, X0, weights=None):
        X0 = tuple(np.asarray(x, dtype=float).reshape(-1) for x in X0)
        if not X0:
            raise ValueError("at least one scenario is required")
        w = np.ones(len(X0)) if weights is None else np.asarray(weights, dtype=float)
        if w.shape != (len(X0),):
            raise ValueError("need one weight per initial state")
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
        w = w / w.sum()
        object.__setattr__(self, "X0", X0)
        object.__setattr__(self, "weights", tuple(float(v) for v in w))

    def __len__(self):
        return len(self.X0)
