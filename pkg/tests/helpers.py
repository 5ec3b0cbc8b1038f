"""Shared problem generators and reference implementations for the tests."""

import numpy as np

from modmpc.moo import Bounds, ObjectiveVector
from modmpc.qp import QpProblem


def random_qp(rng, max_n=6, infeasible_rate=0.15):
    """Random convex QP; a fraction is made infeasible by construction."""
    n = int(rng.integers(1, max_n + 1))
    r = int(rng.integers(1, n + 1))
    M = rng.standard_normal((r, n))
    H = M.T @ M
    if rng.random() < 0.5:
        H += 0.1 * np.eye(n)
    g = 2 * rng.standard_normal(n)
    zf = rng.uniform(-1, 1, n)
    lb = zf - rng.uniform(0, 1.5, n)
    ub = zf + rng.uniform(0, 1.5, n)
    for i in range(n):
        if rng.random() < 0.2:
            lb[i] = -np.inf
        if rng.random() < 0.2:
            ub[i] = np.inf
    if np.linalg.matrix_rank(H) < n:
        # keep the problem bounded below
        lb = np.where(np.isfinite(lb), lb, zf - 1)
        ub = np.where(np.isfinite(ub), ub, zf + 1)
    meq = int(rng.integers(0, n))
    Aeq = rng.standard_normal((meq, n))
    beq = Aeq @ zf
    if meq and rng.random() < infeasible_rate:
        lb = np.where(np.isfinite(lb), lb, zf - 1)
        ub = np.where(np.isfinite(ub), ub, zf + 1)
        beq = beq + np.sign(beq + 1e-9) * (np.abs(Aeq).sum(1) * 3 + 1)
    return QpProblem(H, g, Aeq, beq, lb, ub)


# two quadratic bowls on the unit square; Pareto set is the segment between centres
UNIT = Bounds((0.0, 0.0), (1.0, 1.0), (False, False))


def bowls(p):
    c1, c2 = p
    return ObjectiveVector((c1 - 0.2) ** 2 + (c2 - 0.2) ** 2, (c1 - 0.8) ** 2 + (c2 - 0.8) ** 2)


def bowls_front(n=2001):
    t = np.linspace(0.0, 1.0, n)
    return np.array([bowls((0.2 + 0.6 * s, 0.2 + 0.6 * s)) for s in t])


def peel_ranks(points):
    """Plain O(n^2)-per-level Pareto peeling, independent of modmpc.moo."""
    pts = [tuple(p) for p in points]
    left = set(range(len(pts)))
    out = [0] * len(pts)
    level = 0
    while left:
        level += 1
        layer = []
        for i in left:
            dominated = False
            for j in left:
                a, b = pts[j], pts[i]
                if all(x <= y for x, y in zip(a, b)) and any(x < y for x, y in zip(a, b)):
                    dominated = True
                    break
            if not dominated:
                layer.append(i)
        for i in layer:
            out[i] = level
            left.discard(i)
    return out
