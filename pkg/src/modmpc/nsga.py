"""NSGA-II baseline on the normalized design square.

Deb-style operators: binary tournament on (rank, crowding), simulated
binary crossover, polynomial mutation, and (mu + lambda) survival. Every
individual is snapped and evaluated through the shared archive, so repeated
designs cost nothing.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from modmpc.moo import Archive, Bounds, Evaluator, ranks

N_PARAMS = 2

# generations in a row without a new design before a budget-only run stops
STALL_GENERATIONS = 50


@dataclass(frozen=True)
class NsgaConfig:
    population: int = 20
    generations: int | None = None
    max_evals: int | None = None
    crossover_prob: float = 0.9
    mutation_prob: float = 1.0 / N_PARAMS
    sbx_eta: float = 15.0
    mut_eta: float = 20.0
    seed: int = 0

    def __post_init__(self):
        if self.population < 4 or self.population % 2:
            raise ValueError("population must be even and >= 4")
        if self.generations is None and self.max_evals is None:
            raise ValueError("set generations and/or max_evals")
        if self.generations is not None and self.generations < 0:
            raise ValueError("generations must be >= 0")
        if self.max_evals is not None and self.max_evals < 1:
            raise ValueError("max_evals must be >= 1")

    def to_json(self) -> dict:
        return asdict(self)


def crowding_distance(F: np.ndarray) -> np.ndarray:
    """Crowding distance within one front; boundary points get +inf."""
    F = np.asarray(F, dtype=float)
    n = len(F)
    out = np.zeros(n)
    if n <= 2:
        out[:] = np.inf
        return out
    for m in range(F.shape[1]):
        order = np.argsort(F[:, m], kind="stable")
        span = F[order[-1], m] - F[order[0], m]
        out[order[0]] = out[order[-1]] = np.inf
        if span > 0:
            out[order[1:-1]] += (F[order[2:], m] - F[order[:-2], m]) / span
    return out


def rank_and_crowding(F: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    r = np.asarray(ranks(F), dtype=int)
    crowd = np.zeros(len(F))
    for level in np.unique(r):
        idx = np.flatnonzero(r == level)
        crowd[idx] = crowding_distance(F[idx])
    return r, crowd


def survivors(F: np.ndarray, mu: int) -> np.ndarray:
    """Indices of the *mu* best by rank, then by decreasing crowding."""
    r, crowd = rank_and_crowding(F)
    order = np.lexsort((np.arange(len(F)), -crowd, r))
    return np.sort(order[:mu])


def _better(i, j, r, crowd) -> bool:
    if r[i] != r[j]:
        return r[i] < r[j]
    return crowd[i] > crowd[j]


def sbx(p1, p2, rng, eta, prob):
    c1, c2 = p1.copy(), p2.copy()
    if rng.random() > prob:
        return c1, c2
    for k in range(len(p1)):
        u = rng.random()
        if rng.random() > 0.5 or abs(p1[k] - p2[k]) < 1e-14:
            continue
        beta = (2 * u) ** (1 / (eta + 1)) if u <= 0.5 else (1 / (2 * (1 - u))) ** (1 / (eta + 1))
        c1[k] = 0.5 * ((1 + beta) * p1[k] + (1 - beta) * p2[k])
        c2[k] = 0.5 * ((1 - beta) * p1[k] + (1 + beta) * p2[k])
    return np.clip(c1, 0.0, 1.0), np.clip(c2, 0.0, 1.0)


def poly_mutation(x, rng, eta, prob):
    y = x.copy()
    for k in range(len(y)):
        u = rng.random()
        if rng.random() >= prob:
            continue
        if u < 0.5:
            delta = (2 * u + (1 - 2 * u) * (1 - y[k]) ** (eta + 1)) ** (1 / (eta + 1)) - 1
        else:
            delta = 1 - (2 * (1 - u) + 2 * (u - 0.5) * y[k] ** (eta + 1)) ** (1 / (eta + 1))
        y[k] += delta
    return np.clip(y, 0.0, 1.0)


class Nsga:
    """Generational NSGA-II; ``on_generation`` is called after each one."""

    def __init__(self, evaluator: Evaluator, bounds: Bounds, cfg: NsgaConfig,
                 archive: Archive | None = None, workers: int = 1,
                 on_generation: Callable[[Nsga], None] | None = None):
        self.evaluator = evaluator
        self.bounds = bounds
        self.cfg = cfg
        self.archive = archive if archive is not None else Archive()
        self.workers = workers
        self.on_generation = on_generation
        self.rng = np.random.default_rng(cfg.seed)
        self.n_evals = 0
        self.generation = 0
        self.pop: np.ndarray | None = None      # normalized coordinates
        self.pop_rec: list[int] = []
        self._stalled = 0

    def _remaining(self):
        return None if self.cfg.max_evals is None else self.cfg.max_evals - self.n_evals

    def _evaluate(self, C):
        items = [(self.bounds.design(c), tuple(float(v) for v in c)) for c in C]
        before = len(self.archive)
        recs = self.archive.evaluate_many(self.evaluator, items, budget=self._remaining(),
                                          workers=self.workers)
        self.n_evals += len(self.archive) - before
        keep = [k for k, r in enumerate(recs) if r is not None]
        return C[keep], [recs[k].eval_index for k in keep]

    def _objectives(self, idx):
        return np.array([self.archive.records[i].l for i in idx], dtype=float).reshape(-1, 2)

    def _exhausted(self) -> bool:
        rem = self._remaining()
        return rem is not None and rem <= 0

    def step(self) -> bool:
        cfg = self.cfg
        if self.pop is None:
            C = self.rng.random((cfg.population, N_PARAMS))
            self.pop, self.pop_rec = self._evaluate(C)
            return self._continue()
        F = self._objectives(self.pop_rec)
        r, crowd = rank_and_crowding(F)
        n = len(self.pop)
        kids = []
        while len(kids) < cfg.population:
            parents = []
            for _ in range(2):
                i, j = self.rng.integers(n, size=2)
                parents.append(i if _better(i, j, r, crowd) else j)
            c1, c2 = sbx(self.pop[parents[0]], self.pop[parents[1]], self.rng,
                         cfg.sbx_eta, cfg.crossover_prob)
            kids.append(poly_mutation(c1, self.rng, cfg.mut_eta, cfg.mutation_prob))
            kids.append(poly_mutation(c2, self.rng, cfg.mut_eta, cfg.mutation_prob))
        before = self.n_evals
        K, K_rec = self._evaluate(np.array(kids))
        self._stalled = self._stalled + 1 if self.n_evals == before else 0
        merged = np.vstack([self.pop, K]) if len(K) else self.pop
        merged_rec = self.pop_rec + K_rec
        keep = survivors(self._objectives(merged_rec), min(cfg.population, len(merged_rec)))
        self.pop = merged[keep]
        self.pop_rec = [merged_rec[k] for k in keep]
        self.generation += 1
        if self.on_generation is not None:
            self.on_generation(self)
        return self._continue()

    def _continue(self) -> bool:
        if self._exhausted() or self._stalled >= STALL_GENERATIONS:
            return False
        return self.cfg.generations is None or self.generation < self.cfg.generations

    def run(self) -> Archive:
        while self.step():
            pass
        return self.archive


def run(evaluator: Evaluator, bounds: Bounds, cfg: NsgaConfig, **kw) -> Archive:
    return Nsga(evaluator, bounds, cfg, **kw).run()
