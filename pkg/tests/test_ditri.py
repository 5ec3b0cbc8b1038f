import math

import numpy as np
import pytest
from helpers import UNIT, bowls, bowls_front
from hypothesis import given, settings
from hypothesis import strategies as st

from modmpc.ditri import (INITIAL_SIMPLEXES, Ditri, DitriConfig, Simplex, barycentric, dbar,
                          divide, potentially_optimal, run, sample_in_simplex, simplex_area,
                          simplex_size)
from modmpc.moo import Bounds, DesignPoint, ObjectiveVector, closeness, pareto_filter

TRI = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])

vertex = st.tuples(st.floats(-5, 5), st.floats(-5, 5))
triangles = st.tuples(vertex, vertex, vertex).map(np.array).filter(lambda v: simplex_area(v) > 1e-3)


def test_sampling_recurrence_by_hand():
    np.testing.assert_array_equal(sample_in_simplex(TRI, draws=[1.0, 1.0]), TRI[0])
    np.testing.assert_array_equal(sample_in_simplex(TRI, draws=[0.3, 0.0]), TRI[2])
    np.testing.assert_array_equal(sample_in_simplex(TRI, draws=[0.0, 1.0]), TRI[1])


def test_sample_mean_is_centroid():
    rng = np.random.default_rng(0)
    n = 100_000
    S = np.array([sample_in_simplex(TRI, rng) for _ in range(n)])
    se = S.std(axis=0, ddof=1) / math.sqrt(n)
    assert np.all(np.abs(S.mean(axis=0) - TRI.mean(axis=0)) < 3 * se)


@settings(max_examples=100, deadline=None)
@given(triangles, st.integers(0, 2**32 - 1))
def test_samples_lie_inside(v, seed):
    c = sample_in_simplex(v, np.random.default_rng(seed))
    assert np.all(barycentric(v, c) >= -1e-9)


def test_size_examples():
    assert simplex_size(TRI) == pytest.approx(math.sqrt(5) / 3)
    eq = np.array([[0, 0], [1, 0], [0.5, math.sqrt(3) / 2]])
    assert simplex_size(eq) == pytest.approx(1 / math.sqrt(3))
    assert simplex_size(TRI + [3.0, -2.0]) == pytest.approx(simplex_size(TRI), abs=1e-15)


def test_divide_example():
    a, b = divide(TRI)
    np.testing.assert_array_equal(a, [[0.5, 0.5], [0, 0], [1, 0]])
    np.testing.assert_array_equal(b, [[0.5, 0.5], [0, 0], [0, 1]])
    assert simplex_area(a) == simplex_area(b) == 0.25


def test_divide_tie_goes_to_lowest_pair():
    # equilateral: all three edges tie, so edge (0, 1) is bisected
    v = np.array([[0.0, 0.0], [2.0, 0.0], [1.0, math.sqrt(3)]])
    a, _ = divide(v)
    np.testing.assert_allclose(a[0], [1.0, 0.0])


def test_divide_degenerate():
    with pytest.raises(ValueError):
        divide([[0, 0], [1, 1], [2, 2]])


@settings(max_examples=200, deadline=None)
@given(triangles)
def test_children_halve_area(v):
    a, b = divide(v)
    area = simplex_area(v)
    assert simplex_area(a) == pytest.approx(area / 2, rel=1e-9)
    assert simplex_area(a) + simplex_area(b) == pytest.approx(area, rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 1), st.lists(st.integers(0, 1), min_size=1, max_size=20))
def test_children_shrink_on_reachable_simplexes(root, path):
    # every simplex the search creates is a right isosceles triangle
    v = np.array(INITIAL_SIMPLEXES[root])
    for k in path:
        child = divide(v)[k]
        assert simplex_size(child) == pytest.approx(simplex_size(v) / math.sqrt(2), rel=1e-9)
        v = child


def test_children_can_grow_on_general_triangles():
    v = np.array([[0.0, 0.0], [1.0, 4.0], [4.0, 1.0]])
    assert simplex_size(divide(v)[0]) > simplex_size(v)


def test_dbar_examples():
    assert dbar(0) == pytest.approx(math.sqrt(5), abs=1e-12)
    assert dbar(8) == pytest.approx(math.sqrt(5 / 9), abs=1e-12)
    vals = [dbar(i) for i in range(0, 400)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert dbar(1000) < 1e-20
    with pytest.raises(ValueError):
        dbar(-1)


def _pool(records):
    return [Simplex(v, r, np.mean(v, axis=0)) for v, r in records]


def test_selection_all_rank_one():
    pool = _pool([(np.array(INITIAL_SIMPLEXES[0]), 0), (np.array(INITIAL_SIMPLEXES[1]), 1)])
    assert potentially_optimal(pool, {0, 1}, 40) == [0, 1]


def test_selection_single_rank_one():
    small = TRI * 0.1
    pool = _pool([(small, 0), (small + 0.5, 1), (small + 0.2, 2)])
    assert potentially_optimal(pool, {2}, 10) == [2]


def test_selection_global_route():
    pool = _pool([(TRI * 0.1, 0), (TRI, 1)])
    # record 1 is rank 2 but its simplex is larger than dbar(10)
    assert simplex_size(TRI) > dbar(10)
    assert potentially_optimal(pool, {0}, 10) == [0, 1]


def test_selection_skips_inactive():
    pool = _pool([(TRI, 0), (TRI * 0.5, 1)])
    pool[0].active = False
    assert potentially_optimal(pool, {0, 1}, 50) == [1]


def test_strict_selection_keeps_largest_rank_one():
    pool = _pool([(TRI * 0.125, 0), (TRI * 0.25, 1), (TRI * 0.25 + 0.5, 2)])
    cfg = DitriConfig(selection="strict")
    assert potentially_optimal(pool, {0, 1, 2}, 0, cfg) == [1, 2]
    assert potentially_optimal(pool, {0, 1, 2}, 0) == [0, 1, 2]


def test_config_validation():
    for kw in (dict(max_evals=1), dict(epsilon=0.0), dict(selection="all"), dict(max_iters=-1)):
        with pytest.raises(ValueError):
            DitriConfig(**kw)


def test_budget_of_two_evaluates_initial_points_only():
    arch = run(bowls, UNIT, DitriConfig(max_evals=2))
    assert len(arch) == 2
    assert arch.front == pareto_filter(arch.objectives())


def test_initial_partition():
    d = Ditri(bowls, UNIT, DitriConfig(max_evals=10))
    d.step()
    np.testing.assert_array_equal(d.simplexes[0].vertices, INITIAL_SIMPLEXES[0])
    np.testing.assert_array_equal(d.simplexes[1].vertices, INITIAL_SIMPLEXES[1])
    assert [s.record for s in d.simplexes] == [0, 1]


def _tiling_checker(budget):
    def check(opt):
        act = opt.active()
        assert sum(s.area for s in act) == pytest.approx(1.0, abs=1e-9)
        for s in act:
            assert np.all(barycentric(s.vertices, s.c) >= -1e-12)
            assert s.d == simplex_size(s.vertices)
        assert opt.n_evals <= budget
        assert len(opt.archive) <= budget
    return check


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_run_invariants(seed):
    cfg = DitriConfig(max_evals=150, seed=seed)
    sizes = []

    def hook(opt):
        _tiling_checker(150)(opt)
        sizes.append(len(opt.archive))

    d = Ditri(bowls, UNIT, cfg, on_iteration=hook)
    d.run()
    assert d.n_evals <= 150
    assert max(r.eval_index for r in d.archive.records) < 150


def test_each_division_adds_at_most_two():
    counts = []

    class Counting(Ditri):
        def _evaluate(self, cs):
            before = len(self.archive)
            out = super()._evaluate(cs)
            counts.append(len(self.archive) - before)
            return out

    Counting(bowls, UNIT, DitriConfig(max_evals=80)).run()
    assert max(counts) <= 2


def test_seed_determinism():
    a = run(bowls, UNIT, DitriConfig(max_evals=60, seed=5))
    b = run(bowls, UNIT, DitriConfig(max_evals=60, seed=5))
    c = run(bowls, UNIT, DitriConfig(max_evals=60, seed=6))
    assert a.records == b.records
    assert a.records != c.records


def test_parallel_children_match_sequential():
    a = run(bowls, UNIT, DitriConfig(max_evals=60, seed=3))
    b = run(bowls, UNIT, DitriConfig(max_evals=60, seed=3), workers=4)
    assert a.records == b.records


def test_snapped_duplicates_reuse_archive():
    calls = []

    def ev(p):
        calls.append(p)
        return ObjectiveVector(p.h + p.N, 1 / p.h + 1 / p.N)

    b = Bounds((0.1, 1), (1.0, 3))
    d = Ditri(ev, b, DitriConfig(max_evals=40, seed=0))
    arch = d.run()
    assert len(calls) == len(arch) == d.n_evals
    assert len({r.p for r in arch.records}) == len(arch)
    assert all(isinstance(r.p.N, int) for r in arch.records)
    # every simplex still points at a record whose snapped design matches its sample
    for s in d.simplexes:
        assert arch.records[s.record].p == b.design(s.c)


def test_exhaustive_division_on_constant_objective():
    flat = lambda p: ObjectiveVector(1.0, 1.0)  # noqa: E731
    cfg = DitriConfig(max_evals=10**6, selection="strict")
    d = Ditri(flat, UNIT, cfg)
    d.step()
    for _ in range(10):
        i = d.iteration
        d.step()
        assert max(s.d for s in d.active()) <= dbar(i, cfg)
        assert sum(s.area for s in d.active()) == pytest.approx(1.0, abs=1e-9)


def test_bowls_front_converges():
    ref = bowls_front()
    hits = 0
    for seed in range(10):
        arch = run(bowls, UNIT, DitriConfig(max_evals=200, seed=seed))
        F = arch.objectives()[arch.front]
        hits += closeness(F, ref) < 0.05
    assert hits >= 9


def test_max_iters_stops():
    d = Ditri(bowls, UNIT, DitriConfig(max_evals=10**6, max_iters=3))
    d.run()
    assert d.iteration == 3


def test_design_points_respect_bounds():
    b = Bounds((0.05, 2), (1.0, 8))
    arch = run(lambda p: ObjectiveVector(p.h, p.N), b, DitriConfig(max_evals=30))
    for r in arch.records:
        assert 0.05 <= r.p.h <= 1.0 and 2 <= r.p.N <= 8
        assert r.p == DesignPoint(*b.snap(b.denormalize(r.c)))
