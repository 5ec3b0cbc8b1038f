"""Dense linear-algebra and integration primitives.

Matrix exponential, zero-order-hold discretization, classical RK4 and a
fixed-point discrete Riccati solver. Everything here works on small dense
numpy arrays and has no state.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

_EXPM_ORDER = 13
_EXPM_COEFS = np.array([1.0 / factorial(k) for k in range(_EXPM_ORDER + 1)])


# iterates beyond this are treated as divergence (checked before overflow)
_RICCATI_BLOWUP = 1e150


class RiccatiError(RuntimeError):
    """Raised when the Riccati recursion fails to converge."""


@dataclass(frozen=True)
class DiscreteModel:
    Ad: np.ndarray
    Bd: np.ndarray
    h: float

    @property
    def n_x(self) -> int:
        return self.Ad.shape[0]

    @property
    def n_u(self) -> int:
        return self.Bd.shape[1]


def as_matrix(M, name: str = "matrix") -> np.ndarray:
    """Coerce *M* to a finite 2-D float array."""
    A = np.atleast_2d(np.asarray(M, dtype=float))
    if A.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} has non-finite entries")
    return A


def expm(M) -> np.ndarray:
    """Matrix exponential by scaling and squaring of a degree-13 Taylor sum."""
    A = as_matrix(M, "M")
    n, m = A.shape
    if n != m:
        raise ValueError(f"expm needs a square matrix, got {A.shape}")
    norm = np.max(np.sum(np.abs(A), axis=1)) if n else 0.0
    s = 0
    if norm > 0.5:
        s = int(np.ceil(np.log2(norm / 0.5)))
    X = A / (2.0**s)
    # Horner evaluation of sum X^k / k!
    E = np.eye(n) * _EXPM_COEFS[_EXPM_ORDER]
    for k in range(_EXPM_ORDER - 1, -1, -1):
        E = X @ E + np.eye(n) * _EXPM_COEFS[k]
    for _ in range(s):
        E = E @ E
    return E


def zoh_discretize(A, B, h: float) -> DiscreteModel:
    """Exact zero-order-hold discretization of ``xdot = A x + B u``."""
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    n_x = A.shape[0]
    if A.shape != (n_x, n_x):
        raise ValueError(f"A must be square, got {A.shape}")
    if B.shape[0] != n_x:
        raise ValueError(f"B has {B.shape[0]} rows, expected {n_x}")
    if not h > 0:
        raise ValueError(f"sampling period must be positive, got {h}")
    n_u = B.shape[1]
    M = np.zeros((n_x + n_u, n_x + n_u))
    M[:n_x, :n_x] = A
    M[:n_x, n_x:] = B
    E = expm(M * h)
    return DiscreteModel(E[:n_x, :n_x].copy(), E[:n_x, n_x:].copy(), float(h))


def rk4_step(f, x, u, dt: float) -> np.ndarray:
    """One classical Runge-Kutta step with the input held constant."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    x = np.asarray(x, dtype=float)
    k1 = np.asarray(f(x, u), dtype=float)
    k2 = np.asarray(f(x + 0.5 * dt * k1, u), dtype=float)
    k3 = np.asarray(f(x + 0.5 * dt * k2, u), dtype=float)
    k4 = np.asarray(f(x + dt * k3, u), dtype=float)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _riccati_map(P, Ad, Bd, Qd, Rd):
    PA = P @ Ad
    PB = P @ Bd
    S = Rd + Bd.T @ PB
    K = np.linalg.solve(S, PB.T @ Ad)
    return Qd + Ad.T @ PA - (Ad.T @ PB) @ K


def dare_residual(P, Ad, Bd, Qd, Rd) -> float:
    """Infinity norm of the discrete Riccati residual at *P*."""
    return float(np.max(np.abs(_riccati_map(P, Ad, Bd, Qd, Rd) - P)))


def dare_gain(P, Ad, Bd, Rd) -> np.ndarray:
    """Feedback gain K with u = -K x for the Riccati solution *P*."""
    return np.linalg.solve(Rd + Bd.T @ P @ Bd, Bd.T @ P @ Ad)


def dare_solve(Ad, Bd, Qd, Rd, tol: float = 1e-13, max_iter: int = 200000) -> np.ndarray:
    """Solve the discrete algebraic Riccati equation by value iteration.

    Iterates the Riccati map from ``P = Qd`` until successive iterates agree
    to ``tol`` relative to ``max(1, |P|)``.

    Raises:
        RiccatiError: no convergence within *max_iter* iterations, or the
            iterates blew up (pair not stabilizable / badly scaled).
    """
    Ad = as_matrix(Ad, "Ad")
    Bd = as_matrix(Bd, "Bd")
    Qd = as_matrix(Qd, "Qd")
    Rd = as_matrix(Rd, "Rd")
    n_x, n_u = Bd.shape
    if Ad.shape != (n_x, n_x) or Qd.shape != (n_x, n_x) or Rd.shape != (n_u, n_u):
        raise ValueError("inconsistent Riccati dimensions")
    P = Qd.copy()
    for _ in range(max_iter):
        P_next = _riccati_map(P, Ad, Bd, Qd, Rd)
        P_next = 0.5 * (P_next + P_next.T)
        if not np.all(np.abs(P_next) < _RICCATI_BLOWUP):
            raise RiccatiError("Riccati iterates diverged")
        scale = max(1.0, float(np.max(np.abs(P))))
        if np.max(np.abs(P_next - P)) <= tol * scale:
            return P_next
        P = P_next
    raise RiccatiError(f"Riccati recursion did not converge in {max_iter} iterations")
