"""Dividing-triangles search over the normalized design square.

The unit square is split along its anti-diagonal into two triangles, each
holding one randomly placed evaluated point. Every iteration divides the
potentially optimal triangles (rank-1 point, or size above the shrinking
schedule ``dbar(i)``) by longest-edge bisection and evaluates one new point
in each child. Integer coordinates are snapped before evaluation and designs
already in the archive are not re-evaluated.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from modmpc.moo import Archive, Bounds, DesignPoint, Evaluator, ObjectiveVector

SELECTION_MODES = ("rank1", "strict")

AREA_TOL = 1e-12


@dataclass
class Simplex:
    vertices: np.ndarray          # (3, 2)
    record: int                   # eval_index of its point in the archive
    c: np.ndarray                 # sampled normalized point
    d: float = field(init=False)
    area: float = field(init=False)
    active: bool = True

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        self.d = simplex_size(self.vertices)
        self.area = simplex_area(self.vertices)
        if self.area <= AREA_TOL:
            raise ValueError("degenerate simplex")


@dataclass(frozen=True)
class DitriConfig:
    max_evals: int = 40
    max_iters: int | None = None
    seed: int = 0
    epsilon: float = 1e-9
    dbar_c: float = 5.0
    dbar_base: float = 9.0
    dbar_div: float = 8.0
    selection: str = "rank1"

    def __post_init__(self):
        if self.max_evals < 2:
            raise ValueError("max_evals must be >= 2")
        if self.max_iters is not None and self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.selection not in SELECTION_MODES:
            raise ValueError(f"selection must be one of {SELECTION_MODES}")

    def to_json(self) -> dict:
        return asdict(self)


def simplex_area(v) -> float:
    v = np.asarray(v, dtype=float)
    a, b = v[1] - v[0], v[2] - v[0]
    return 0.5 * abs(a[0] * b[1] - a[1] * b[0])


def simplex_size(v) -> float:
    """Largest centroid-to-vertex distance."""
    v = np.asarray(v, dtype=float)
    return float(np.max(np.linalg.norm(v - v.mean(axis=0), axis=1)))


def barycentric(v, c) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    T = np.column_stack([v[1] - v[0], v[2] - v[0]])
    l12 = np.linalg.solve(T, np.asarray(c, dtype=float) - v[0])
    return np.array([1.0 - l12.sum(), l12[0], l12[1]])


def sample_in_simplex(v, rng: np.random.Generator | None = None, draws=None) -> np.ndarray:
    """Uniform point in the triangle *v* by the nested power-of-uniform recurrence.

    ``s_1 = b_1`` and ``s_i = b_i + U_i^(1/(i-1)) (s_{i-1} - b_i)``. *draws*
    overrides the uniform variates (for testing).
    """
    v = np.asarray(v, dtype=float)
    U = rng.random(len(v) - 1) if draws is None else np.asarray(draws, dtype=float)
    s = v[0].copy()
    for i in range(1, len(v)):
        s = v[i] + U[i - 1] ** (1.0 / i) * (s - v[i])
    return s


_EDGES = ((0, 1), (0, 2), (1, 2))


def divide(v) -> tuple[np.ndarray, np.ndarray]:
    """Bisect the longest edge; ties go to the lowest vertex-index pair.

    Children are ``(midpoint, opposite, endpoint)`` for each endpoint.
    """
    v = np.asarray(v, dtype=float)
    if simplex_area(v) <= AREA_TOL:
        raise ValueError("degenerate simplex")
    lengths = [float(np.sum((v[a] - v[b]) ** 2)) for a, b in _EDGES]
    a, b = _EDGES[int(np.argmax(lengths))]
    o = 3 - a - b
    m = 0.5 * (v[a] + v[b])
    return np.array([m, v[o], v[a]]), np.array([m, v[o], v[b]])


def dbar(i: int, cfg: DitriConfig = DitriConfig()) -> float:
    if i < 0:
        raise ValueError("iteration index must be >= 0")
    return math.sqrt(cfg.dbar_c / cfg.dbar_base ** (i / cfg.dbar_div))


def potentially_optimal(simplexes, front: set, i: int, cfg: DitriConfig = DitriConfig()) -> list[int]:
    """Positions of active simplexes to divide at iteration *i*.

    A simplex qualifies if its point is on the current front (rank 1) or its
    size exceeds ``dbar(i)``. In ``strict`` mode only the largest rank-1
    simplexes qualify through the rank route.
    """
    active = [k for k, s in enumerate(simplexes) if s.active]
    on_front = [k for k in active if simplexes[k].record in front]
    if cfg.selection == "strict" and on_front:
        dmax = max(simplexes[k].d for k in on_front)
        # sizes equal up to round-off count as ties
        on_front = [k for k in on_front if simplexes[k].d >= dmax * (1 - 1e-12)]
    limit = dbar(i, cfg)
    chosen = set(on_front)
    chosen.update(k for k in active if simplexes[k].d > limit)
    return sorted(chosen)


INITIAL_SIMPLEXES = (
    ((0.0, 0.0), (1.0, 0.0), (0.0, 1.0)),
    ((1.0, 1.0), (1.0, 0.0), (0.0, 1.0)),
)


class Ditri:
    """Stateful optimizer; call :meth:`run`, or :meth:`step` to drive it.

    ``on_iteration`` (if given) is called with the optimizer after every
    completed iteration.
    """

    def __init__(self, evaluator: Evaluator, bounds: Bounds, cfg: DitriConfig = DitriConfig(),
                 archive: Archive | None = None, workers: int = 1,
                 on_iteration: Callable[[Ditri], None] | None = None):
        self.evaluator = evaluator
        self.bounds = bounds
        self.cfg = cfg
        self.archive = archive if archive is not None else Archive()
        self.workers = workers
        self.on_iteration = on_iteration
        self.rng = np.random.default_rng(cfg.seed)
        self.simplexes: list[Simplex] = []
        self.iteration = 0
        self.n_evals = 0
        self.done = False

    # budget helpers
    def _remaining(self) -> int:
        return self.cfg.max_evals - self.n_evals

    def _evaluate(self, cs) -> list | None:
        """Evaluate normalized points as one batch, or None if over budget."""
        items = [(self.bounds.design(c), tuple(c)) for c in cs]
        fresh = {p for p, _ in items if self.archive.lookup(p) is None}
        if len(fresh) > self._remaining():
            return None
        recs = self.archive.evaluate_many(self.evaluator, items, workers=self.workers)
        self.n_evals += len(fresh)
        return recs

    def initialize(self) -> None:
        verts = [np.array(v) for v in INITIAL_SIMPLEXES]
        cs = [sample_in_simplex(v, self.rng) for v in verts]
        recs = self._evaluate(cs)
        self.simplexes = [Simplex(v, r.eval_index, c) for v, r, c in zip(verts, recs, cs)]

    def step(self) -> bool:
        """One iteration. Returns False once the run has terminated."""
        if self.done:
            return False
        if not self.simplexes:
            self.initialize()
            return self._check_stop()
        front = set(self.archive.front)
        chosen = potentially_optimal(self.simplexes, front, self.iteration, self.cfg)
        for k in chosen:
            s = self.simplexes[k]
            kids = divide(s.vertices)
            cs = [sample_in_simplex(v, self.rng) for v in kids]
            recs = self._evaluate(cs)
            if recs is None:
                self.done = True
                return False
            s.active = False
            self.simplexes.extend(Simplex(v, r.eval_index, c) for v, r, c in zip(kids, recs, cs))
        self.iteration += 1
        if self.on_iteration is not None:
            self.on_iteration(self)
        return self._check_stop()

    def _check_stop(self) -> bool:
        if self.n_evals >= self.cfg.max_evals:
            self.done = True
        if self.cfg.max_iters is not None and self.iteration >= self.cfg.max_iters:
            self.done = True
        return not self.done

    def run(self) -> Archive:
        while self.step():
            pass
        return self.archive

    def active(self) -> list[Simplex]:
        return [s for s in self.simplexes if s.active]


def run(evaluator: Evaluator, bounds: Bounds, cfg: DitriConfig = DitriConfig(), **kw) -> Archive:
    return Ditri(evaluator, bounds, cfg, **kw).run()


__all__ = [
    "Bounds", "DesignPoint", "Ditri", "DitriConfig", "ObjectiveVector", "Simplex",
    "barycentric", "dbar", "divide", "potentially_optimal", "run", "sample_in_simplex",
    "simplex_area", "simplex_size",
]
