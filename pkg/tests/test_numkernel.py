import math

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from modmpc.numkernel import RiccatiError, dare_residual, dare_solve, expm, rk4_step, zoh_discretize

GOLDEN = (1 + math.sqrt(5)) / 2


def test_expm_zero_is_identity():
    assert np.array_equal(expm(np.zeros((2, 2))), np.eye(2))


def test_expm_diagonal():
    np.testing.assert_allclose(expm(np.diag([1.0, 2.0])), np.diag([math.e, math.e**2]), rtol=1e-13)


def test_expm_nilpotent_exact():
    assert np.array_equal(expm([[0.0, 1.0], [0.0, 0.0]]), np.array([[1.0, 1.0], [0.0, 1.0]]))


@pytest.mark.parametrize("bad", [np.zeros((2, 3)), np.array([[np.nan]])])
def test_expm_rejects_bad_input(bad):
    with pytest.raises(ValueError):
        expm(bad)


matrices = arrays(np.float64, st.tuples(st.integers(1, 5), st.just(1)).map(lambda t: (t[0], t[0])),
                  elements=st.floats(-1.0, 1.0, allow_subnormal=False))


@given(matrices)
@settings(max_examples=60, deadline=None)
def test_expm_inverse_property(M):
    # scale so that |M|_inf <= 5
    s = np.max(np.sum(np.abs(M), axis=1))
    if s > 1e-3:
        M = M * (5.0 / s)
    np.testing.assert_allclose(expm(M) @ expm(-M), np.eye(len(M)), atol=1e-8)


@given(matrices)
@settings(max_examples=60, deadline=None)
def test_expm_matches_reference(M):
    s = np.max(np.sum(np.abs(M), axis=1))
    M = M * (10.0 / s) if s > 1e-3 else M
    ref = sla.expm(M)
    assert np.max(np.abs(expm(M) - ref)) <= 1e-10 * max(1.0, np.max(np.abs(ref)))


def test_zoh_zero_dynamics():
    dm = zoh_discretize(np.zeros((2, 2)), [[1.0], [0.0]], 0.5)
    assert np.array_equal(dm.Ad, np.eye(2))
    np.testing.assert_allclose(dm.Bd, [[0.5], [0.0]], atol=1e-16)


def test_zoh_double_integrator_bit_exact():
    dm = zoh_discretize([[0.0, 1.0], [0.0, 0.0]], [[0.0], [1.0]], 0.1)
    h = 0.1
    assert np.array_equal(dm.Ad, np.array([[1.0, h], [0.0, 1.0]]))
    np.testing.assert_allclose(dm.Bd, [[h * h / 2], [h]], rtol=1e-15)


def test_zoh_scalar_closed_form():
    dm = zoh_discretize([[-1.0]], [[1.0]], 1.0)
    np.testing.assert_allclose(dm.Ad, [[math.exp(-1)]], rtol=1e-14)
    np.testing.assert_allclose(dm.Bd, [[1 - math.exp(-1)]], rtol=1e-14)


@pytest.mark.parametrize("h", [0.0, -1.0])
def test_zoh_rejects_nonpositive_h(h):
    with pytest.raises(ValueError):
        zoh_discretize([[0.0]], [[1.0]], h)


def test_zoh_dimension_mismatch():
    with pytest.raises(ValueError):
        zoh_discretize(np.eye(2), np.ones((3, 1)), 0.1)


def test_rk4_zero_field():
    x = rk4_step(lambda x, u: np.zeros(2), [1.0, 2.0], [5.0], 0.1)
    assert np.array_equal(x, [1.0, 2.0])


def test_rk4_decay():
    x = rk4_step(lambda x, u: -x, np.array([1.0]), None, 0.1)
    assert x[0] == pytest.approx(0.9048375, abs=1e-7)


def test_rk4_constant_field():
    x = rk4_step(lambda x, u: np.asarray(u), np.array([0.0]), np.array([2.0]), 0.5)
    assert x[0] == 1.0


@pytest.mark.parametrize("lam", [-1.0, -3.0, 0.7])
def test_rk4_local_error_order(lam):
    def err(dt):
        return abs(rk4_step(lambda x, u: lam * x, np.array([1.0]), None, dt)[0] - math.exp(lam * dt))

    ratio = err(0.2) / err(0.1)
    assert 32 * 0.8 <= ratio <= 32 * 1.2


def test_dare_deadbeat():
    np.testing.assert_allclose(dare_solve([[0.0]], [[1.0]], [[1.0]], [[1.0]]), [[1.0]], atol=1e-14)


def test_dare_golden_ratio():
    P = dare_solve([[1.0]], [[1.0]], [[1.0]], [[1.0]])
    assert abs(P[0, 0] - GOLDEN) <= 1e-10


def test_dare_lyapunov_case():
    P = dare_solve(0.5 * np.eye(2), np.zeros((2, 1)), np.eye(2), np.eye(1))
    np.testing.assert_allclose(P, np.eye(2) * 4 / 3, atol=1e-12)


def test_dare_unstabilizable_raises():
    with pytest.raises(RiccatiError):
        dare_solve([[2.0]], [[0.0]], [[1.0]], [[1.0]], max_iter=2000)


def random_stabilizable(rng):
    n = int(rng.integers(1, 5))
    m = int(rng.integers(1, n + 1))
    A = rng.standard_normal((n, n))
    A *= rng.uniform(0.5, 1.3) / max(1e-9, np.max(np.abs(np.linalg.eigvals(A))))
    B = rng.standard_normal((n, m))
    C = rng.standard_normal((n, n))
    Q = C.T @ C + 0.1 * np.eye(n)
    D = rng.standard_normal((m, m))
    R = D.T @ D + 0.1 * np.eye(m)
    return A, B, Q, R


def test_dare_random_pairs_residual_and_structure():
    rng = np.random.default_rng(7)
    for _ in range(50):
        A, B, Q, R = random_stabilizable(rng)
        P = dare_solve(A, B, Q, R)
        scale = max(1.0, np.max(np.abs(P)))
        assert dare_residual(P, A, B, Q, R) <= 1e-8 * scale
        assert np.max(np.abs(P - P.T)) <= 1e-10 * scale
        assert np.min(np.linalg.eigvalsh(P)) >= -1e-8
        np.testing.assert_allclose(P, sla.solve_discrete_are(A, B, Q, R), rtol=1e-7, atol=1e-9)
