"""Convex QP with equality and box constraints.

    minimize    1/2 z' H z + g' z
    subject to  Aeq z = beq,  lb <= z <= ub

Solved by an operator-splitting (ADMM) iteration in the OSQP style with a
fixed penalty, Ruiz equilibration and a final active-set polish. The inner
iteration loop runs in a compiled kernel when available and in numpy
otherwise; :data:`KERNEL` names the backend in use.

:func:`oracle_qp` is an exhaustive active-set enumerator used as a test
oracle for small problems.
"""

from __future__ import annotations

import enum
import itertools
import os
from dataclasses import dataclass, field

import numpy as np

from modmpc import _admm_py


def _select_kernel():
    if os.environ.get("MODMPC_KERNEL", "").lower() in ("py", "python", "numpy"):
        return _admm_py.admm_loop, "python"
    try:
        from modmpc._admm_kernel import admm_loop
    except ImportError:
        return _admm_py.admm_loop, "python"
    return admm_loop, "compiled"


_admm_loop, KERNEL = _select_kernel()


class QpStatus(str, enum.Enum):
    SOLVED = "Solved"
    MAX_ITERATIONS = "MaxIterations"
    INFEASIBLE = "Infeasible"


_STATUS_CODES = {
    _admm_py.SOLVED: QpStatus.SOLVED,
    _admm_py.MAX_ITER: QpStatus.MAX_ITERATIONS,
    _admm_py.INFEASIBLE: QpStatus.INFEASIBLE,
}


@dataclass
class QpProblem:
    H: np.ndarray
    g: np.ndarray
    Aeq: np.ndarray | None = None
    beq: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self):
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        n = self.H.shape[0]
        if self.H.shape != (n, n):
            raise ValueError(f"H must be square, got {self.H.shape}")
        self.g = np.asarray(self.g, dtype=float).reshape(-1)
        if self.g.shape != (n,):
            raise ValueError(f"g has length {self.g.size}, expected {n}")
        if self.Aeq is None:
            self.Aeq = np.zeros((0, n))
            self.beq = np.zeros(0)
        self.Aeq = np.asarray(self.Aeq, dtype=float).reshape(-1, n)
        self.beq = np.asarray(self.beq, dtype=float).reshape(-1)
        if self.beq.shape != (self.Aeq.shape[0],):
            raise ValueError("beq length does not match Aeq rows")
        self.lb = np.full(n, -np.inf) if self.lb is None else np.asarray(self.lb, dtype=float).reshape(-1)
        self.ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float).reshape(-1)
        if self.lb.shape != (n,) or self.ub.shape != (n,):
            raise ValueError("bound vectors must have length n_z")
        if np.any(self.lb > self.ub):
            raise ValueError("lb must not exceed ub")
        if np.max(np.abs(self.H - self.H.T), initial=0.0) > 1e-9 * max(1.0, np.max(np.abs(self.H), initial=0.0)):
            raise ValueError("H must be symmetric")

    @property
    def n_z(self) -> int:
        return self.H.shape[0]

    def objective(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(0.5 * z @ self.H @ z + self.g @ z)


@dataclass
class QpSolution:
    z: np.ndarray
    objective: float
    iterations: int
    status: QpStatus
    y_eq: np.ndarray = field(default_factory=lambda: np.zeros(0))
    polished: bool = False

    @property
    def solved(self) -> bool:
        return self.status is QpStatus.SOLVED


@dataclass(frozen=True)
class AdmmSettings:
    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6
    eps_abs: float = 1e-6
    eps_rel: float = 1e-6
    eps_pinf: float = 1e-6
    max_iter: int = 20000
    check_every: int = 5
    scaling_iters: int = 10
    polish: bool = True


def _ruiz(P, A, iters):
    n = P.shape[0]
    m = A.shape[0]
    D = np.ones(n)
    E = np.ones(m)
    Ps = P.copy()
    As = A.copy()
    for _ in range(iters):
        col = np.max(np.abs(Ps), axis=0, initial=0.0)
        if m:
            col = np.maximum(col, np.max(np.abs(As), axis=0))
            row = np.max(np.abs(As), axis=1)
        else:
            row = np.zeros(0)
        d = 1.0 / np.sqrt(np.clip(col, 1e-4, 1e4))
        e = 1.0 / np.sqrt(np.clip(row, 1e-4, 1e4))
        Ps = d[:, None] * Ps * d[None, :]
        As = e[:, None] * As * d[None, :]
        D *= d
        E *= e
    mean_col = np.mean(np.max(np.abs(Ps), axis=0, initial=0.0)) if n else 1.0
    c = 1.0 / np.clip(mean_col, 1e-4, 1e4)
    return Ps * c, As, D, E, c


class QpWorkspace:
    """Factorized solver for a fixed Hessian and constraint structure.

    The linear term, equality right-hand side and box bounds may change
    between :meth:`solve` calls; every solve starts cold from zero.
    """

    def __init__(self, H, Aeq, box_mask=None, settings: AdmmSettings | None = None):
        self.settings = settings or AdmmSettings()
        H = np.asarray(H, dtype=float)
        Aeq = np.asarray(Aeq, dtype=float).reshape(-1, H.shape[0])
        n = H.shape[0]
        self.n = n
        self.n_eq = Aeq.shape[0]
        if box_mask is None:
            box_mask = np.ones(n, dtype=bool)
        self.box_idx = np.flatnonzero(box_mask)
        I_box = np.zeros((self.box_idx.size, n))
        I_box[np.arange(self.box_idx.size), self.box_idx] = 1.0
        self.H = H
        self.A = np.vstack([Aeq, I_box])
        self.m = self.A.shape[0]
        s = self.settings
        self.Ps, self.As, self.D, self.E, self.c = _ruiz(H, self.A, s.scaling_iters)
        self.Ps = np.ascontiguousarray(self.Ps)
        self.As = np.ascontiguousarray(self.As)
        self._factor_cache = {}
        self._polish_cache = {}

    def _kinv(self, eq_rows: np.ndarray):
        key = eq_rows.tobytes()
        hit = self._factor_cache.get(key)
        if hit is not None:
            return hit
        s = self.settings
        rho = np.full(self.m, s.rho)
        rho[eq_rows] = 1e3 * s.rho
        K = self.Ps + s.sigma * np.eye(self.n) + self.As.T @ (rho[:, None] * self.As)
        Kinv = np.ascontiguousarray(np.linalg.inv(K))
        self._factor_cache[key] = (Kinv, rho)
        return Kinv, rho

    def solve(self, g, beq, lb, ub) -> QpSolution:
        s = self.settings
        g = np.asarray(g, dtype=float)
        l = np.concatenate([np.asarray(beq, dtype=float), np.asarray(lb, dtype=float)[self.box_idx]])
        u = np.concatenate([np.asarray(beq, dtype=float), np.asarray(ub, dtype=float)[self.box_idx]])
        with np.errstate(invalid="ignore"):
            eq_rows = np.isfinite(l) & ((u - l) <= 1e-12 * np.maximum(1.0, np.abs(l)))
        Kinv, rho = self._kinv(eq_rows)

        qs = np.ascontiguousarray(self.c * self.D * g)
        ls = np.ascontiguousarray(self.E * l)
        us = np.ascontiguousarray(self.E * u)
        x = np.zeros(self.n)
        z = np.zeros(self.m)
        y = np.zeros(self.m)
        iters = 0
        polished = False
        stalled = False
        while True:
            code, k = _admm_loop(Kinv, self.As, self.Ps, qs, ls, us, rho,
                                 s.sigma, s.alpha, s.eps_abs, s.eps_rel, s.eps_pinf,
                                 s.max_iter - iters, s.check_every, x, z, y)
            iters += k
            if code != _admm_py.STALLED:
                break
            # stalled iterates: either slow dual growth or infeasibility
            stalled = True
            xp, yp = self._polish(self.D * x, self.E * y / self.c, g, l, u, eq_rows)
            if xp is not None:
                code = _admm_py.SOLVED
                break
            if iters >= s.max_iter:
                code = _admm_py.MAX_ITER
                break
        if code == _admm_py.MAX_ITER and stalled:
            code = _admm_py.INFEASIBLE
        status = _STATUS_CODES[code]
        xu = self.D * x
        yu = self.E * y / self.c
        if status is not QpStatus.INFEASIBLE:
            if s.polish:
                xp, yp = self._polish(xu, yu, g, l, u, eq_rows)
                if xp is not None:
                    xu, yu, polished = xp, yp, True
                    status = QpStatus.SOLVED
            if not polished:
                # boxes hold exactly, as for the projected ADMM iterate
                nb = self.n_eq
                xu = xu.copy()
                xu[self.box_idx] = np.clip(xu[self.box_idx], l[nb:], u[nb:])
            if status is QpStatus.SOLVED and not polished and not self._kkt_ok(xu, yu, g, l, u):
                status = QpStatus.MAX_ITERATIONS
        obj = float(0.5 * xu @ self.H @ xu + g @ xu)
        return QpSolution(xu, obj, int(iters), status, yu[: self.n_eq].copy(), polished)

    def _kkt_ok(self, x, y, g, l, u) -> bool:
        s = self.settings
        Ax = self.A @ x
        Px = self.H @ x
        Aty = self.A.T @ y
        zc = np.clip(Ax, l, u)
        r_prim = np.max(np.abs(Ax - zc), initial=0.0)
        r_dual = np.max(np.abs(Px + g + Aty), initial=0.0)
        tol_p = s.eps_abs + s.eps_rel * max(np.max(np.abs(Ax), initial=0.0), np.max(np.abs(zc), initial=0.0))
        tol_d = s.eps_abs + s.eps_rel * max(np.max(np.abs(Px), initial=0.0), np.max(np.abs(Aty), initial=0.0),
                                            np.max(np.abs(g), initial=0.0))
        # scaled termination can be looser than the unscaled test by the scaling spread
        return r_prim <= 10 * tol_p and r_dual <= 10 * tol_d

    def _polish_system(self, act):
        key = act.tobytes()
        hit = self._polish_cache.get(key)
        if hit is not None:
            return hit
        n = self.n
        k = act.size
        A_act = self.A[act]
        KKT = np.zeros((n + k, n + k))
        KKT[:n, :n] = self.H
        KKT[:n, n:] = A_act.T
        KKT[n:, :n] = A_act
        # quasi-definite regularization; solutions are refined against KKT
        delta = 1e-9
        Kreg = KKT.copy()
        Kreg[np.diag_indices(n)] += delta
        Kreg[n + np.arange(k), n + np.arange(k)] -= delta
        try:
            with np.errstate(all="ignore"):
                Kreg_inv = np.linalg.inv(Kreg)
            if not np.all(np.isfinite(Kreg_inv)):
                Kreg_inv = None
        except np.linalg.LinAlgError:
            Kreg_inv = None
        if len(self._polish_cache) >= 256:
            self._polish_cache.clear()
        self._polish_cache[key] = (KKT, Kreg_inv)
        return KKT, Kreg_inv

    def _polish(self, x, y, g, l, u, eq_rows):
        z = self.A @ x
        lower = (z - l < -y) | eq_rows
        upper = (u - z < y) & ~eq_rows
        act = np.flatnonzero(lower | upper)
        b_act = np.where(upper[act], u[act], l[act])
        n = self.n
        k = act.size
        rhs = np.concatenate([-g, b_act])
        KKT, Kreg_inv = self._polish_system(act)
        if Kreg_inv is not None:
            with np.errstate(all="ignore"):
                sol = Kreg_inv @ rhs
                for _ in range(3):
                    sol = sol + Kreg_inv @ (rhs - KKT @ sol)
        else:
            sol = np.full(n + k, np.nan)
        if not np.all(np.isfinite(sol)):
            sol, *_ = np.linalg.lstsq(KKT, rhs, rcond=None)
        xp = sol[:n]
        yp = np.zeros(self.m)
        yp[act] = sol[n:]
        if not np.all(np.isfinite(sol)):
            return None, None
        tol = self.settings.eps_abs
        scale = max(1.0, np.max(np.abs(rhs), initial=0.0), np.max(np.abs(sol), initial=0.0))
        if np.max(np.abs(KKT @ sol - rhs), initial=0.0) > 1e-9 * scale:
            return None, None
        Ax = self.A @ xp
        if np.any(Ax < l - tol) or np.any(Ax > u + tol):
            return None, None
        y_l = yp[lower & ~eq_rows]
        y_u = yp[upper]
        if np.any(y_l > tol) or np.any(y_u < -tol):
            return None, None
        return xp, yp


def solve_qp(q: QpProblem, eps_abs: float = 1e-6, eps_rel: float = 1e-6,
             max_iter: int = 20000, settings: AdmmSettings | None = None) -> QpSolution:
    """Solve *q* with the ADMM method.

    Infeasible problems are reported through ``status``, never raised.
    """
    if settings is None:
        settings = AdmmSettings(eps_abs=eps_abs, eps_rel=eps_rel, max_iter=max_iter)
    box_mask = np.isfinite(q.lb) | np.isfinite(q.ub)
    ws = QpWorkspace(q.H, q.Aeq, box_mask, settings)
    return ws.solve(q.g, q.beq, q.lb, q.ub)


ORACLE_MAX_VARS = 8
ORACLE_MAX_BOUNDS = 16


def oracle_qp(q: QpProblem, feas_tol: float = 1e-8) -> QpSolution:
    """Exact minimizer by enumerating every active set of the box bounds.

    Each combination fixes a subset of variables at a bound, solves the
    equality-constrained KKT system in the remaining variables and keeps the
    feasible candidate with the smallest objective.
    """
    n = q.n_z
    n_bounds = int(np.sum(np.isfinite(q.lb)) + np.sum(np.isfinite(q.ub)))
    if n > ORACLE_MAX_VARS or n_bounds > ORACLE_MAX_BOUNDS:
        raise ValueError(f"oracle limited to n_z <= {ORACLE_MAX_VARS} and "
                         f"<= {ORACLE_MAX_BOUNDS} finite bounds (got {n}, {n_bounds})")
    choices = []
    for i in range(n):
        opts = [None]
        if np.isfinite(q.lb[i]):
            opts.append(q.lb[i])
        if np.isfinite(q.ub[i]) and q.ub[i] != q.lb[i]:
            opts.append(q.ub[i])
        choices.append(opts)

    best_z = None
    best_obj = np.inf
    count = 0
    for combo in itertools.product(*choices):
        count += 1
        fixed = np.array([c is not None for c in combo], dtype=bool)
        z = np.zeros(n)
        z[fixed] = [c for c in combo if c is not None]
        free = ~fixed
        nf = int(free.sum())
        if nf:
            Hff = q.H[np.ix_(free, free)]
            gf = q.g[free] + q.H[np.ix_(free, fixed)] @ z[fixed]
            Af = q.Aeq[:, free]
            bf = q.beq - q.Aeq[:, fixed] @ z[fixed]
            m = Af.shape[0]
            K = np.zeros((nf + m, nf + m))
            K[:nf, :nf] = Hff
            K[:nf, nf:] = Af.T
            K[nf:, :nf] = Af
            rhs = np.concatenate([-gf, bf])
            sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
            if np.max(np.abs(K @ sol - rhs), initial=0.0) > 1e-8 * max(1.0, np.max(np.abs(rhs), initial=0.0)):
                continue
            z[free] = sol[:nf]
        if q.Aeq.shape[0] and np.max(np.abs(q.Aeq @ z - q.beq)) > feas_tol * max(1.0, np.max(np.abs(q.beq))):
            continue
        if np.any(z < q.lb - feas_tol) or np.any(z > q.ub + feas_tol):
            continue
        obj = q.objective(z)
        if obj < best_obj:
            best_obj = obj
            best_z = z.copy()
    if best_z is None:
        return QpSolution(np.full(n, np.nan), np.inf, count, QpStatus.INFEASIBLE)
    return QpSolution(best_z, best_obj, count, QpStatus.SOLVED)
