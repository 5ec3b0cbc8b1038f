import numpy as np
import pytest
from helpers import UNIT, bowls, bowls_front, peel_ranks
from hypothesis import given, settings
from hypothesis import strategies as st

from modmpc import nsga
from modmpc.moo import Bounds, ObjectiveVector, closeness, ranks
from modmpc.nsga import Nsga, NsgaConfig, crowding_distance, poly_mutation, sbx, survivors


def test_config_validation():
    for kw in (dict(population=5, generations=1), dict(population=2, generations=1),
               dict(), dict(generations=-1), dict(max_evals=0)):
        with pytest.raises(ValueError):
            NsgaConfig(**kw)
    cfg = NsgaConfig(generations=3)
    assert (cfg.population, cfg.crossover_prob, cfg.mutation_prob) == (20, 0.9, 0.5)
    assert (cfg.sbx_eta, cfg.mut_eta) == (15.0, 20.0)


def test_zero_generations_is_initial_population():
    arch = nsga.run(bowls, UNIT, NsgaConfig(generations=0, seed=1))
    assert len(arch) == 20
    rng = np.random.default_rng(1)
    np.testing.assert_array_equal([r.c for r in arch.records], rng.random((20, 2)))


def test_budget_respected():
    opt = Nsga(bowls, UNIT, NsgaConfig(max_evals=55, seed=0))
    arch = opt.run()
    assert len(arch) == opt.n_evals == 55


def test_generation_limit():
    opt = Nsga(bowls, UNIT, NsgaConfig(generations=4, seed=0))
    opt.run()
    assert opt.generation == 4
    assert len(opt.archive) <= 20 * 5


def test_seed_determinism():
    a = nsga.run(bowls, UNIT, NsgaConfig(max_evals=100, seed=3))
    b = nsga.run(bowls, UNIT, NsgaConfig(max_evals=100, seed=3))
    c = nsga.run(bowls, UNIT, NsgaConfig(max_evals=100, seed=4))
    assert a.records == b.records
    assert a.records != c.records


def test_parallel_matches_sequential():
    a = nsga.run(bowls, UNIT, NsgaConfig(max_evals=80, seed=2))
    b = nsga.run(bowls, UNIT, NsgaConfig(max_evals=80, seed=2), workers=4)
    assert a.records == b.records


def test_bowls_front_quality():
    ref = bowls_front()
    hits = 0
    for seed in range(10):
        arch = nsga.run(bowls, UNIT, NsgaConfig(max_evals=400, seed=seed))
        hits += closeness(arch.objectives()[arch.front], ref) < 0.1
    assert hits >= 8


def test_sorting_agrees_with_moo_every_generation():
    seen = []

    def hook(opt):
        F = opt._objectives(opt.pop_rec)
        assert ranks(F) == peel_ranks(F.tolist())
        seen.append(len(F))

    Nsga(bowls, UNIT, NsgaConfig(generations=6, seed=0), on_generation=hook).run()
    assert len(seen) == 6


def test_population_stays_in_unit_square():
    def hook(opt):
        assert np.all((opt.pop >= 0) & (opt.pop <= 1))

    Nsga(bowls, UNIT, NsgaConfig(generations=10, seed=5), on_generation=hook).run()


def test_crowding_boundaries_infinite():
    F = np.array([[0.0, 3.0], [1.0, 2.0], [2.0, 1.0], [3.0, 0.0]])
    d = crowding_distance(F)
    assert np.isinf(d[0]) and np.isinf(d[3])
    np.testing.assert_allclose(d[1:3], [4 / 3, 4 / 3])
    assert np.all(np.isinf(crowding_distance(F[:2])))


def test_survivors_keep_boundaries():
    F = np.array([[0.0, 3.0], [1.0, 2.0], [1.1, 1.9], [3.0, 0.0], [5.0, 5.0]])
    keep = survivors(F, 3)
    assert 0 in keep and 3 in keep and 4 not in keep


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.lists(st.floats(0, 1), min_size=4, max_size=4))
def test_operators_clamp(seed, xs):
    rng = np.random.default_rng(seed)
    p1, p2 = np.array(xs[:2]), np.array(xs[2:])
    c1, c2 = sbx(p1, p2, rng, 15.0, 1.0)
    for c in (c1, c2, poly_mutation(c1, rng, 20.0, 1.0)):
        assert np.all((c >= 0) & (c <= 1))


def test_integer_designs_are_snapped():
    b = Bounds((0.1, 1), (1.0, 4))
    arch = nsga.run(lambda p: ObjectiveVector(p.h, 1 / p.h + p.N), b, NsgaConfig(max_evals=30))
    assert all(isinstance(r.p.N, int) and 1 <= r.p.N <= 4 for r in arch.records)
    assert len({r.p for r in arch.records}) == len(arch)


def test_stall_stops_budget_only_run():
    # only two designs exist after snapping, so evaluations dry up
    b = Bounds((1.0, 1), (1.4, 2), (True, True))
    calls = []
    flat = lambda p: calls.append(p) or ObjectiveVector(1.0, 1.0)  # noqa: E731
    opt = Nsga(flat, b, NsgaConfig(max_evals=10**6, seed=0))
    opt.run()
    assert opt.generation <= nsga.STALL_GENERATIONS + 1
    assert len(calls) == len(opt.archive) == 2
