"""Bi-objective primitives: dominance, Pareto filtering, ranks, front metrics.

Objective vectors are ``(V, eta)``, both minimized. Design points are
``(h, N)``; optimizers work in the normalized square ``c in [0, 1]^2`` and
map back through :class:`Bounds`.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np


class DesignPoint(NamedTuple):
    h: float
    N: float

    def validate(self) -> DesignPoint:
        if not self.h > 0:
            raise ValueError(f"h must be positive, got {self.h}")
        if self.N < 1:
            raise ValueError(f"N must be >= 1, got {self.N}")
        return self


class ObjectiveVector(NamedTuple):
    V: float
    eta: float


def _as_points(points) -> np.ndarray:
    P = np.asarray(points, dtype=float)
    if P.size == 0:
        return P.reshape(0, 2)
    if P.ndim != 2:
        raise ValueError("points must be an (n, m) array")
    return P


# -- dominance -----------------------------------------------------------

def dominates(a, b) -> bool:
    """True iff *a* is no worse than *b* everywhere and better somewhere."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return bool(np.all(a <= b) and np.any(a < b))


def dominance_matrix(points) -> np.ndarray:
    """``D[i, j]`` is True iff point i dominates point j."""
    P = _as_points(points)
    le = np.all(P[:, None, :] <= P[None, :, :], axis=2)
    lt = np.any(P[:, None, :] < P[None, :, :], axis=2)
    return le & lt


def pareto_filter(points) -> list[int]:
    """Indices (ascending) of the non-dominated points; duplicates all kept."""
    P = _as_points(points)
    if len(P) == 0:
        return []
    D = dominance_matrix(P)
    return [int(i) for i in np.flatnonzero(~D.any(axis=0))]


def ranks(points) -> list[int]:
    """Pareto layer of each point: 1 for the front, 2 after removing it, ..."""
    P = _as_points(points)
    n = len(P)
    out = np.zeros(n, dtype=int)
    if n == 0:
        return []
    D = dominance_matrix(P)
    left = np.ones(n, dtype=bool)
    level = 0
    while left.any():
        level += 1
        beaten = D[left][:, left].any(axis=0)
        idx = np.flatnonzero(left)[~beaten]
        out[idx] = level
        left[idx] = False
    return out.tolist()


# -- front metrics ---------------------------------------------------------

def normalize_front(points, reference_union) -> np.ndarray:
    """Affine map of each axis onto [0, 1] using min/max of *reference_union*.

    A degenerate axis (max == min) maps to 0.
    """
    P = _as_points(points)
    U = _as_points(reference_union)
    if len(U) == 0:
        raise ValueError("reference set is empty")
    lo = U.min(axis=0)
    span = U.max(axis=0) - lo
    out = np.zeros_like(P)
    ok = span > 0
    out[:, ok] = (P[:, ok] - lo[ok]) / span[ok]
    return out


def closeness(front, ref_front) -> float:
    """Mean over *front* of the distance to the nearest point of *ref_front*."""
    F = _as_points(front)
    R = _as_points(ref_front)
    if len(F) == 0 or len(R) == 0:
        raise ValueError("fronts must be non-empty")
    d = np.sqrt(((F[:, None, :] - R[None, :, :]) ** 2).sum(axis=2))
    return float(d.min(axis=1).mean())


def tips(front) -> tuple[np.ndarray, np.ndarray]:
    """End points of a front: lowest first objective and lowest second.

    Ties are broken on the other objective.
    """
    F = _as_points(front)
    if len(F) == 0:
        raise ValueError("front must be non-empty")
    i0 = np.lexsort((F[:, 1], F[:, 0]))[0]
    i1 = np.lexsort((F[:, 0], F[:, 1]))[0]
    return F[i0], F[i1]


def tip_distances(front, ref_front) -> tuple[float, float]:
    a0, a1 = tips(front)
    b0, b1 = tips(ref_front)
    return float(np.linalg.norm(a0 - b0)), float(np.linalg.norm(a1 - b1))


PSI_AGGREGATES = {"mean": lambda d: 0.5 * (d[0] + d[1]), "sum": sum, "max": max}


def coverage(front, ref_front, aggregate: str = "mean") -> float:
    """Tip-to-tip distance between *front* and *ref_front* (mean of the two)."""
    return float(PSI_AGGREGATES[aggregate](tip_distances(front, ref_front)))


def front_metrics(front, ref_front) -> dict:
    """Closeness and coverage after joint normalization of both fronts."""
    F = _as_points(front)
    R = _as_points(ref_front)
    U = np.vstack([F, R])
    Fn, Rn = normalize_front(F, U), normalize_front(R, U)
    d = tip_distances(Fn, Rn)
    return {
        "delta": closeness(Fn, Rn),
        "psi": PSI_AGGREGATES["mean"](d),
        "psi_sum": PSI_AGGREGATES["sum"](d),
        "psi_max": PSI_AGGREGATES["max"](d),
    }


def band_fit(designs) -> dict | None:
    """Least-squares line ``h = intercept + slope * N`` through front designs.

    Pareto-optimal designs are expected to lie in a strip of negative slope in
    the (N, h) plane; this is a reported diagnostic, never enforced. Returns
    None when the designs span fewer than two distinct N.
    """
    P = np.array([(float(p[0]), float(p[1])) for p in designs], dtype=float).reshape(-1, 2)
    if len(np.unique(P[:, 1])) < 2:
        return None
    slope, intercept = np.polyfit(P[:, 1], P[:, 0], 1)
    resid = P[:, 0] - (intercept + slope * P[:, 1])
    return {"slope": float(slope), "intercept": float(intercept),
            "max_abs_residual": float(np.max(np.abs(resid))), "negative_slope": bool(slope < 0)}


# -- design space ----------------------------------------------------------

def round_half_up(x: float) -> float:
    return float(math.floor(x + 0.5))


@dataclass(frozen=True)
class Bounds:
    """Box ``[p_lower, p_upper]`` over ``(h, N)``; N is integer by default."""

    p_lower: tuple
    p_upper: tuple
    integer_mask: tuple = (False, True)

    def __post_init__(self):
        lo = tuple(float(v) for v in self.p_lower)
        hi = tuple(float(v) for v in self.p_upper)
        if len(lo) != 2 or len(hi) != 2 or len(self.integer_mask) != 2:
            raise ValueError("bounds are two-dimensional (h, N)")
        if not all(a < b for a, b in zip(lo, hi)):
            raise ValueError(f"need p_lower < p_upper, got {lo} {hi}")
        if not all(np.isfinite(lo + hi)):
            raise ValueError("bounds must be finite")
        object.__setattr__(self, "p_lower", lo)
        object.__setattr__(self, "p_upper", hi)
        object.__setattr__(self, "integer_mask", tuple(bool(m) for m in self.integer_mask))

    def normalize(self, p) -> np.ndarray:
        lo, hi = np.array(self.p_lower), np.array(self.p_upper)
        return (np.asarray(p, dtype=float) - lo) / (hi - lo)

    def denormalize(self, c) -> np.ndarray:
        lo, hi = np.array(self.p_lower), np.array(self.p_upper)
        return lo + (hi - lo) * np.asarray(c, dtype=float)

    def snap(self, p_cont) -> DesignPoint:
        """Round integer coordinates to nearest, halves upward."""
        vals = [round_half_up(v) if m else float(v) for v, m in zip(p_cont, self.integer_mask)]
        h, N = vals
        return DesignPoint(h, int(N) if self.integer_mask[1] else N)

    def design(self, c) -> DesignPoint:
        return self.snap(self.denormalize(c))


def normalize(p, b: Bounds) -> np.ndarray:
    return b.normalize(p)


def denormalize(c, b: Bounds) -> np.ndarray:
    return b.denormalize(c)


def snap(p_cont, b: Bounds) -> DesignPoint:
    return b.snap(p_cont)


# -- archive ---------------------------------------------------------------

@dataclass(frozen=True)
class EvalRecord:
    p: DesignPoint
    c: tuple
    l: ObjectiveVector  # noqa: E741
    eval_index: int


Evaluator = Callable[[DesignPoint], ObjectiveVector]


class _Front:
    """Non-dominated subset under insertion (amortized array storage)."""

    def __init__(self):
        self._idx = np.empty(16, dtype=np.int64)
        self._val = np.empty((16, 2))
        self._n = 0

    def add(self, i: int, l) -> bool:  # noqa: E741
        n = self._n
        F = self._val[:n]
        l = np.asarray(l, dtype=float)  # noqa: E741
        if n and np.any(np.all(F <= l, axis=1) & np.any(F < l, axis=1)):
            return False
        keep = ~(np.all(l <= F, axis=1) & np.any(l < F, axis=1))
        m = int(keep.sum())
        if m < n:
            self._idx[:m] = self._idx[:n][keep]
            self._val[:m] = F[keep]
        if m == len(self._idx):
            self._idx = np.concatenate([self._idx, np.empty_like(self._idx)])
            self._val = np.concatenate([self._val, np.empty_like(self._val)])
        self._idx[m] = i
        self._val[m] = l
        self._n = m + 1
        return True

    def indices(self) -> list[int]:
        return sorted(int(i) for i in self._idx[: self._n])


class Archive:
    """Append-only evaluation log with an incrementally maintained front.

    Designs are keyed by their snapped value; asking for a design already
    in the archive returns the stored record without a new evaluation.
    """

    def __init__(self):
        self.records: list[EvalRecord] = []
        self._front = _Front()
        self._by_design: dict[DesignPoint, int] = {}

    @property
    def front(self) -> list[int]:
        return self._front.indices()

    def __len__(self):
        return len(self.records)

    def lookup(self, p: DesignPoint) -> EvalRecord | None:
        i = self._by_design.get(p)
        return None if i is None else self.records[i]

    def append(self, p: DesignPoint, c, l) -> EvalRecord:  # noqa: E741
        if p in self._by_design:
            raise ValueError(f"design {p} already evaluated")
        l = ObjectiveVector(float(l[0]), float(l[1]))  # noqa: E741
        if not (math.isfinite(l.V) and math.isfinite(l.eta)):
            raise ValueError(f"objectives must be finite, got {l}")
        rec = EvalRecord(p, tuple(float(v) for v in c), l, len(self.records))
        self.records.append(rec)
        self._by_design[p] = rec.eval_index
        self._front.add(rec.eval_index, l)
        return rec

    def evaluate(self, evaluator: Evaluator, p: DesignPoint, c) -> tuple[EvalRecord, bool]:
        """Evaluate *p* unless cached; returns ``(record, newly_evaluated)``."""
        rec = self.lookup(p)
        if rec is not None:
            return rec, False
        return self.append(p, c, evaluator(p)), True

    def evaluate_many(self, evaluator: Evaluator, items: Sequence[tuple], budget: int | None = None,
                      workers: int = 1) -> list[EvalRecord | None]:
        """Evaluate ``(p, c)`` pairs, committing results in input order.

        New designs beyond *budget* evaluations are skipped (``None``).
        Duplicates within *items* are evaluated once.
        """
        fresh: list[DesignPoint] = []
        seen: set = set()
        plan = []
        for p, c in items:
            if p in self._by_design or p in seen:
                plan.append((p, c))
            elif budget is None or len(fresh) < budget:
                fresh.append(p)
                seen.add(p)
                plan.append((p, c))
            else:
                plan.append(None)
        if workers > 1 and len(fresh) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                values = dict(zip(fresh, pool.map(evaluator, fresh)))
        else:
            values = {p: evaluator(p) for p in fresh}
        out = []
        for item in plan:
            if item is None:
                out.append(None)
                continue
            p, c = item
            rec = self.lookup(p)
            out.append(rec if rec is not None else self.append(p, c, values[p]))
        return out

    def objectives(self) -> np.ndarray:
        return np.array([r.l for r in self.records], dtype=float).reshape(-1, 2)

    def front_records(self) -> list[EvalRecord]:
        return [self.records[i] for i in sorted(self.front)]

    def ranks(self) -> list[int]:
        return ranks(self.objectives())

    def prefix_fronts(self) -> Iterable[list[int]]:
        """Front indices after each of the first 1..len(records) records."""
        front = _Front()
        for rec in self.records:
            front.add(rec.eval_index, rec.l)
            yield front.indices()


def grid_oracle(evaluator: Evaluator, bounds: Bounds, n_h: int = 400, workers: int = 1) -> Archive:
    """Brute-force reference: ``n_h`` h-values (endpoints included) per integer N."""
    if n_h < 2:
        raise ValueError("n_h must be >= 2")
    (h_lo, N_lo), (h_hi, N_hi) = bounds.p_lower, bounds.p_upper
    hs = np.linspace(h_lo, h_hi, n_h)
    Ns = range(int(math.ceil(N_lo)), int(math.floor(N_hi)) + 1)
    items = []
    for N in Ns:
        for h in hs:
            p = DesignPoint(float(h), int(N))
            items.append((p, tuple(bounds.normalize(p))))
    arch = Archive()
    arch.evaluate_many(evaluator, items, workers=workers)
    return arch
