"""Finite-horizon linear MPC as a sparse QP.

The decision vector is ``z = (x_0, ..., x_N, u_0, ..., u_{N-1})``. Dynamics
enter as equality rows, state bounds apply to ``x_1 .. x_{N-1}`` and input
bounds to every ``u_k``; ``x_0`` is data and ``x_N`` is left free.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from modmpc.numkernel import as_matrix, dare_solve, expm, zoh_discretize
from modmpc.qp import AdmmSettings, QpProblem, QpStatus, QpWorkspace

COST_MODES = ("euler", "exact")


class QpFailure(RuntimeError):
    """The MPC optimization did not return a usable solution."""

    def __init__(self, status: QpStatus, message: str = ""):
        super().__init__(message or f"QP returned {status.value}")
        self.status = status


def _vec(v, n, name):
    a = np.broadcast_to(np.asarray(v, dtype=float), (n,)).copy()
    if a.shape != (n,):
        raise ValueError(f"{name} must have length {n}")
    return a


@dataclass(frozen=True, eq=False)
class OcpSpec:
    """Continuous LTI model, quadratic weights, bounds and design point.

    ``Qf=None`` selects the discrete Riccati terminal weight.
    """

    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    x_lb: np.ndarray
    x_ub: np.ndarray
    u_lb: np.ndarray
    u_ub: np.ndarray
    h: float
    N: int
    Qf: np.ndarray | None = None
    cost_mode: str = "euler"
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        B = as_matrix(self.B, "B")
        n_x = A.shape[0]
        if A.shape != (n_x, n_x) or B.shape[0] != n_x:
            raise ValueError(f"inconsistent model shapes A{A.shape} B{B.shape}")
        n_u = B.shape[1]
        Q = as_matrix(self.Q, "Q")
        R = as_matrix(self.R, "R")
        if Q.shape != (n_x, n_x) or R.shape != (n_u, n_u):
            raise ValueError("weight shapes do not match the model")
        if np.min(np.linalg.eigvalsh(0.5 * (Q + Q.T))) < -1e-10:
            raise ValueError("Q must be positive semidefinite")
        if np.min(np.linalg.eigvalsh(0.5 * (R + R.T))) <= 0:
            raise ValueError("R must be positive definite")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        if self.Qf is not None:
            Qf = as_matrix(self.Qf, "Qf")
            if Qf.shape != (n_x, n_x) or np.min(np.linalg.eigvalsh(0.5 * (Qf + Qf.T))) < -1e-10:
                raise ValueError("Qf must be a PSD n_x x n_x matrix")
            object.__setattr__(self, "Qf", Qf)
        for name, n in (("x_lb", n_x), ("x_ub", n_x), ("u_lb", n_u), ("u_ub", n_u)):
            object.__setattr__(self, name, _vec(getattr(self, name), n, name))
        if np.any(self.x_lb > 0) or np.any(self.x_ub < 0) or np.any(self.u_lb > 0) or np.any(self.u_ub < 0):
            raise ValueError("bounds must contain the origin")
        if not self.h > 0:
            raise ValueError(f"h must be positive, got {self.h}")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N}")
        object.__setattr__(self, "h", float(self.h))
        object.__setattr__(self, "N", int(self.N))
        if self.cost_mode not in COST_MODES:
            raise ValueError(f"cost_mode must be one of {COST_MODES}")

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    @property
    def n_z(self) -> int:
        return self.n_x * (self.N + 1) + self.n_u * self.N

    def with_design(self, h: float, N: int) -> OcpSpec:
        return replace(self, h=h, N=N, _cache={})

    def discrete(self):
        if "zoh" not in self._cache:
            self._cache["zoh"] = zoh_discretize(self.A, self.B, self.h)
        return self._cache["zoh"]

    def stage_weights(self):
        """Discrete stage weights ``(Qd, Rd, S)`` with cross term ``S`` (x'S u)."""
        if "stage" in self._cache:
            return self._cache["stage"]
        if self.cost_mode == "euler":
            out = (self.h * self.Q, self.h * self.R, np.zeros((self.n_x, self.n_u)))
        else:
            out = _van_loan_weights(self.A, self.B, self.Q, self.R, self.h)
        self._cache["stage"] = out
        return out


def _van_loan_weights(A, B, Q, R, h):
    # integral over one ZOH interval of [x;u]' blkdiag(Q,R) [x;u]
    n_x, n_u = B.shape
    n = n_x + n_u
    Ac = np.zeros((n, n))
    Ac[:n_x, :n_x] = A
    Ac[:n_x, n_x:] = B
    W = np.zeros((n, n))
    W[:n_x, :n_x] = Q
    W[n_x:, n_x:] = R
    C = np.zeros((2 * n, 2 * n))
    C[:n, :n] = -Ac.T
    C[:n, n:] = W
    C[n:, n:] = Ac
    F = expm(C * h)
    Wd = F[n:, n:].T @ F[:n, n:]
    Wd = 0.5 * (Wd + Wd.T)
    return Wd[:n_x, :n_x], Wd[n_x:, n_x:], Wd[:n_x, n_x:]


def terminal_weight(spec: OcpSpec) -> np.ndarray:
    """Terminal weight: the supplied ``Qf`` or the discrete Riccati solution."""
    if spec.Qf is not None:
        return spec.Qf
    if "Qf" in spec._cache:
        return spec._cache["Qf"]
    dm = spec.discrete()
    Qd, Rd, S = spec.stage_weights()
    if np.any(S):
        # remove the cross term: u = v - Rd^-1 S' x
        RiSt = np.linalg.solve(Rd, S.T)
        P = dare_solve(dm.Ad - dm.Bd @ RiSt, dm.Bd, Qd - S @ RiSt, Rd)
    else:
        P = dare_solve(dm.Ad, dm.Bd, Qd, Rd)
    spec._cache["Qf"] = P
    return P


def _structure(spec: OcpSpec):
    """Hessian, equality matrix and index layout (independent of x0)."""
    n_x, n_u, N = spec.n_x, spec.n_u, spec.N
    dm = spec.discrete()
    Qd, Rd, S = spec.stage_weights()
    Qf = terminal_weight(spec)
    n_z = spec.n_z
    xi = lambda k: slice(k * n_x, (k + 1) * n_x)  # noqa: E731
    ui = lambda k: slice(n_x * (N + 1) + k * n_u, n_x * (N + 1) + (k + 1) * n_u)  # noqa: E731

    H = np.zeros((n_z, n_z))
    for k in range(N):
        if k > 0 or np.any(S):
            H[xi(k), xi(k)] = Qd
        H[ui(k), ui(k)] = Rd
        if np.any(S):
            H[xi(k), ui(k)] = S
            H[ui(k), xi(k)] = S.T
    H[xi(N), xi(N)] = Qf

    Aeq = np.zeros((n_x * (N + 1), n_z))
    Aeq[:n_x, xi(0)] = np.eye(n_x)
    for k in range(N):
        rows = slice(n_x * (k + 1), n_x * (k + 2))
        Aeq[rows, xi(k + 1)] = np.eye(n_x)
        Aeq[rows, xi(k)] = -dm.Ad
        Aeq[rows, ui(k)] = -dm.Bd

    lb = np.full(n_z, -np.inf)
    ub = np.full(n_z, np.inf)
    for k in range(1, N):
        lb[xi(k)] = spec.x_lb
        ub[xi(k)] = spec.x_ub
    for k in range(N):
        lb[ui(k)] = spec.u_lb
        ub[ui(k)] = spec.u_ub
    return H, Aeq, lb, ub, ui(0)


def build_qp(spec: OcpSpec, x0) -> QpProblem:
    """The OCP for initial state *x0* as a :class:`QpProblem`."""
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape != (spec.n_x,):
        raise ValueError(f"x0 must have length {spec.n_x}")
    H, Aeq, lb, ub, _ = _structure(spec)
    beq = np.zeros(Aeq.shape[0])
    beq[: spec.n_x] = x0
    return QpProblem(H, np.zeros(spec.n_z), Aeq, beq, lb, ub)


class MpcController:
    """Receding-horizon control law for one :class:`OcpSpec`.

    The QP structure and its factorization are built once; each call to
    :meth:`control` only changes the initial-state equality rows.
    """

    def __init__(self, spec: OcpSpec, settings: AdmmSettings | None = None):
        self.spec = spec
        H, Aeq, self.lb, self.ub, self._u0 = _structure(spec)
        self._n_eq = Aeq.shape[0]
        box = np.isfinite(self.lb) | np.isfinite(self.ub)
        self.workspace = QpWorkspace(H, Aeq, box, settings)
        self._g = np.zeros(spec.n_z)
        self.last_solution = None

    def solve(self, x0):
        beq = np.zeros(self._n_eq)
        beq[: self.spec.n_x] = x0
        sol = self.workspace.solve(self._g, beq, self.lb, self.ub)
        self.last_solution = sol
        return sol

    def control(self, x0) -> np.ndarray:
        """First input of the optimal sequence; raises :class:`QpFailure`."""
        x0 = np.asarray(x0, dtype=float).reshape(-1)
        if x0.shape != (self.spec.n_x,):
            raise ValueError(f"x0 must have length {self.spec.n_x}")
        sol = self.solve(x0)
        if not sol.solved:
            raise QpFailure(sol.status)
        return sol.z[self._u0].copy()


def control(spec: OcpSpec, x0, settings: AdmmSettings | None = None) -> np.ndarray:
    return MpcController(spec, settings).control(x0)
