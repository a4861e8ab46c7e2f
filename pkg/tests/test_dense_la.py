import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from modules.dense_la import (AUGMENTED, NORMAL_EQUATIONS, SymmetricSystem, cg_solve,
                              condition_number, exact_solve)
from modules.errors import NonConvergenceError, SingularSystemError

SADDLE = np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 1.0], [1.0, 1.0, 0.0]])


def test_symmetry_enforced():
    sys = SymmetricSystem(np.array([[2.0, 1.0], [1.0 + 1e-13, 3.0]]))
    assert np.array_equal(sys.M, sys.M.T)


def test_augmented_blocks():
    A = np.array([[1.0, 2.0, 0.0]])
    s = np.array([1.0, 2.0, 3.0])
    sys = SymmetricSystem.augmented(A, s)
    assert sys.kind == AUGMENTED and sys.order == 4
    np.testing.assert_array_equal(sys.M[:3, :3], np.diag(s ** 2))
    np.testing.assert_array_equal(sys.M[3:, :3], A)
    assert sys.M[3, 3] == 0.0


def test_identity_solve():
    v = np.array([1.0, -2.0, 3.0])
    np.testing.assert_allclose(exact_solve(SymmetricSystem(np.eye(3), NORMAL_EQUATIONS), v), v)


def test_saddle_example():
    z = exact_solve(SymmetricSystem(SADDLE), np.array([0.0, 0.0, 1.0]))
    np.testing.assert_allclose(z, [0.5, 0.5, -0.5], atol=1e-14)


def test_zero_rhs():
    assert np.array_equal(exact_solve(SymmetricSystem(SADDLE), np.zeros(3)), np.zeros(3))


def test_singular_system_raises():
    M = np.array([[1.0, 1.0], [1.0, 1.0]])
    with pytest.raises(SingularSystemError):
        exact_solve(SymmetricSystem(M), np.array([1.0, 0.0]))


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2 ** 31 - 1), n=st.integers(2, 12))
def test_exact_solve_residual_on_augmented_systems(seed, n):
    rng = np.random.default_rng(seed)
    m = max(1, n // 2)
    A = rng.standard_normal((m, n))
    s = rng.uniform(0.5, 2.0, size=n)
    sys = SymmetricSystem.augmented(A, s)
    rhs = rng.standard_normal(n + m)
    z = exact_solve(sys, rhs)
    assert np.linalg.norm(sys.M @ z - rhs) <= 1e-12 * np.linalg.norm(rhs) * max(1.0, condition_number(sys) / 1e3)


def test_cg_identity_one_iteration():
    sys = SymmetricSystem(np.eye(4), NORMAL_EQUATIONS)
    x, matvecs = cg_solve(sys, np.ones(4))
    np.testing.assert_allclose(x, np.ones(4))
    assert matvecs == 1


def test_cg_two_eigenvalues():
    sys = SymmetricSystem(np.diag([1.0, 4.0]), NORMAL_EQUATIONS)
    x, matvecs = cg_solve(sys, np.array([1.0, 1.0]))
    np.testing.assert_allclose(x, [1.0, 0.25], atol=1e-12)
    assert matvecs <= 2


def test_cg_zero_rhs():
    x, matvecs = cg_solve(SymmetricSystem(np.eye(3), NORMAL_EQUATIONS), np.zeros(3))
    assert matvecs == 0 and not x.any()


def test_cg_requires_normal_equations():
    with pytest.raises(ValueError):
        cg_solve(SymmetricSystem(SADDLE), np.ones(3))


def test_cg_iteration_cap_carries_best_iterate():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((6, 10))
    sys = SymmetricSystem.normal_equations(A, rng.uniform(1e-3, 1.0, size=10))
    with pytest.raises(NonConvergenceError) as info:
        cg_solve(sys, rng.standard_normal(6), tol=1e-14, max_iter=2)
    assert info.value.best_iterate.shape == (6,)


@pytest.mark.parametrize('jacobi', [False, True])
def test_cg_agrees_with_exact(jacobi):
    rng = np.random.default_rng(4)
    A = rng.standard_normal((5, 9))
    sys = SymmetricSystem.normal_equations(A, rng.uniform(0.5, 2.0, size=9))
    rhs = rng.standard_normal(5)
    x, _ = cg_solve(sys, rhs, tol=1e-12, jacobi=jacobi)
    np.testing.assert_allclose(x, exact_solve(sys, rhs), rtol=1e-9, atol=1e-10)


def test_condition_number_examples():
    assert condition_number(SymmetricSystem(np.eye(3), NORMAL_EQUATIONS)) == pytest.approx(1.0)
    assert condition_number(SymmetricSystem(np.diag([10.0, 0.1]), NORMAL_EQUATIONS)) == pytest.approx(100.0)


def test_condition_number_matches_eigenvalues():
    eig = np.abs(np.linalg.eigvalsh(SADDLE))
    assert condition_number(SymmetricSystem(SADDLE)) == pytest.approx(eig.max() / eig.min())


def test_condition_number_singular_is_inf():
    assert condition_number(SymmetricSystem(np.zeros((2, 2)), NORMAL_EQUATIONS)) == float('inf')


def test_condition_number_cap(monkeypatch):
    monkeypatch.setenv('QIPM_COND_CAP', '2')
    with pytest.raises(ValueError):
        condition_number(SymmetricSystem(SADDLE))
    assert condition_number(SymmetricSystem(SADDLE), cap=3) > 1.0
