import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from partinv import linalg
from oracles import normal_equations, power_iteration_sigma


def test_least_squares_identity():
    np.testing.assert_allclose(linalg.least_squares(np.eye(4), [1, 2, 3, 4]), [1, 2, 3, 4])


def test_least_squares_orthonormal_columns():
    A = np.eye(4)[:, :2]
    np.testing.assert_allclose(linalg.least_squares(A, [5, 7, 0, 0]), [5, 7], atol=1e-15)


@pytest.mark.parametrize("method", ["svd", "qr"])
def test_least_squares_matches_normal_equations(rng, method):
    A = rng.standard_normal((8, 3))
    x_true = np.array([1.0, -2.0, 3.0])
    y = A @ x_true
    x = linalg.least_squares(A, y, method=method)
    np.testing.assert_allclose(x, normal_equations(A, y), atol=1e-9)
    np.testing.assert_allclose(x, x_true, atol=1e-9)


def test_least_squares_minimum_norm_on_rank_deficient():
    A = np.array([[1.0, 1.0], [1.0, 1.0], [0.0, 0.0]])
    x = linalg.least_squares(A, [2.0, 2.0, 0.0])
    np.testing.assert_allclose(x, [1.0, 1.0], atol=1e-12)
    np.testing.assert_allclose(linalg.least_squares(A, [2.0, 2.0, 0.0], method="qr"), x, atol=1e-12)


def test_least_squares_errors():
    with pytest.raises(ValueError, match="dimension"):
        linalg.least_squares(np.eye(3), [1.0, 2.0])
    with pytest.raises(ValueError, match="non-finite"):
        linalg.least_squares(np.eye(2), [1.0, np.nan])
    with pytest.raises(ValueError, match="non-finite"):
        linalg.least_squares(np.array([[np.inf, 0.0], [0.0, 1.0]]), [1.0, 1.0])


def test_richardson_identity_one_step():
    y = np.array([0.3, -1.0, 2.5])
    res = linalg.richardson_least_squares(np.eye(3), y, relaxation=1.0)
    assert res.converged and res.iterations == 1
    np.testing.assert_allclose(res.x, y)


def test_richardson_diagonal_contraction():
    A = np.zeros((4, 2))
    A[0, 0], A[1, 1] = 1.0, 0.5
    y = np.array([2.0, -3.0, 0.7, 0.1])
    exact = np.array([2.0, -6.0])
    # eigenvalues of A^T A are 1 and 0.25: error shrinks by at most 0.75 per step
    errors = [np.linalg.norm(exact)]
    for k in range(1, 40):
        xk = linalg.richardson_least_squares(A, y, relaxation=1.0, max_iters=k, tol=0.0).x
        errors.append(np.linalg.norm(xk - exact))
    for prev, cur in zip(errors, errors[1:]):
        assert cur <= 0.75 * prev + 1e-15
    full = linalg.richardson_least_squares(A, y, relaxation=1.0)
    assert full.converged
    np.testing.assert_allclose(full.x, linalg.least_squares(A, y), rtol=1e-6)


def test_richardson_reports_non_convergence():
    A = np.diag([1.0, 1e-3])
    res = linalg.richardson_least_squares(A, [1.0, 1.0], relaxation=1.0, max_iters=5)
    assert not res.converged and res.iterations == 5


@pytest.mark.parametrize("seed", range(100))
def test_richardson_agrees_with_direct(seed):
    g = np.random.default_rng(seed)
    m, n = g.integers(4, 12), g.integers(1, 4)
    A = g.standard_normal((m, n)) + 2 * np.eye(m, n)
    y = g.standard_normal(m)
    tol = 1e-12
    ref = linalg.least_squares(A, y)
    res = linalg.richardson_least_squares(A, y, tol=tol)
    assert res.converged
    # normal-equation residual tol translates into solution error through cond(A^T A)
    cond2 = np.linalg.cond(A) ** 2
    assert np.linalg.norm(res.x - ref) <= 10 * tol * cond2 * np.linalg.norm(ref) + 1e-14


def test_svd_diag_and_rank_one():
    f = linalg.svd(np.diag([3.0, 1.0]))
    np.testing.assert_allclose(f.s, [3.0, 1.0])
    g = linalg.svd(np.ones((2, 2)))
    np.testing.assert_allclose(g.s, [2.0, 0.0], atol=1e-15)
    assert g.rank == 1


def test_svd_orthogonality_and_reconstruction(rng):
    A = rng.standard_normal((5, 3))
    f = linalg.svd(A)
    np.testing.assert_allclose(f.U.T @ f.U, np.eye(3), atol=1e-10)
    np.testing.assert_allclose(f.Vt @ f.V, np.eye(3), atol=1e-10)
    assert np.linalg.norm(A - f.reconstruct(), 2) <= 1e-10 * np.linalg.norm(A, 2)
    assert np.all(np.diff(f.s) <= 0)


def test_svd_sign_convention(rng):
    f = linalg.svd(rng.standard_normal((6, 4)))
    for j in range(4):
        col = f.U[:, j]
        assert col[np.flatnonzero(np.abs(col) > 1e-12)[0]] > 0


def test_singular_value_wrappers():
    D = np.diag([3.0, 1.0])
    assert (linalg.spectral_norm(D), linalg.min_singular_value(D), linalg.min_nonzero_singular_value(D)) == (
        pytest.approx(3.0), pytest.approx(1.0), pytest.approx(1.0))
    ones = np.ones((2, 2))
    assert linalg.spectral_norm(ones) == pytest.approx(2.0)
    assert linalg.min_singular_value(ones) == pytest.approx(0.0, abs=1e-15)
    assert linalg.min_nonzero_singular_value(ones) == pytest.approx(2.0)


def test_spectral_norm_matches_power_iteration(rng):
    A = rng.standard_normal((6, 4))
    assert linalg.spectral_norm(A) == pytest.approx(power_iteration_sigma(A), abs=1e-6)
    assert linalg.power_iteration(A, 200) == pytest.approx(linalg.spectral_norm(A), rel=1e-6)


def test_normalize_columns(rng):
    np.testing.assert_allclose(linalg.normalize_columns(np.array([[3.0], [4.0], [0.0]])).ravel(), [0.6, 0.8, 0.0])
    np.testing.assert_array_equal(linalg.normalize_columns(np.eye(3)), np.eye(3))
    B = linalg.normalize_columns(rng.standard_normal((8, 5)))
    np.testing.assert_allclose(np.linalg.norm(B, axis=0), 1.0, atol=1e-12)
    A = np.ones((3, 3))
    A[:, 2] = 0
    with pytest.raises(ValueError, match="column 2"):
        linalg.normalize_columns(A)


shapes = st.tuples(st.integers(2, 9), st.integers(1, 6))


@settings(max_examples=40, deadline=None)
@given(shapes, st.integers(0, 2**32 - 1))
def test_least_squares_is_optimal(shape, seed):
    g = np.random.default_rng(seed)
    A = g.standard_normal(shape)
    y = g.standard_normal(shape[0])
    best = np.linalg.norm(y - A @ linalg.least_squares(A, y))
    for _ in range(100):
        x = g.standard_normal(shape[1])
        assert best <= np.linalg.norm(y - A @ x) + 1e-9


@settings(max_examples=40, deadline=None)
@given(shapes, st.integers(0, 2**32 - 1))
def test_least_squares_exact_recovery(shape, seed):
    m, n = max(shape), min(shape)
    g = np.random.default_rng(seed)
    A = g.standard_normal((m, n))
    if np.linalg.svd(A, compute_uv=False)[-1] <= 1e-6:
        return
    x = g.standard_normal(n)
    np.testing.assert_allclose(linalg.least_squares(A, A @ x), x, rtol=0, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(shapes, st.integers(0, 2**32 - 1))
def test_svd_residuals(shape, seed):
    A = np.random.default_rng(seed).uniform(-1, 1, shape)
    f = linalg.svd(A)
    scale = max(np.linalg.norm(A, 2), 1e-300)
    assert np.linalg.norm(A - f.reconstruct(), 2) <= 1e-10 * scale
    k = f.s.size
    assert np.abs(f.U.T @ f.U - np.eye(k)).max() <= 1e-10
    assert np.abs(f.Vt @ f.Vt.T - np.eye(k)).max() <= 1e-10
