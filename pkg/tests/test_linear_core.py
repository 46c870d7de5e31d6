import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from refine.errors import NonFinite, RankDeficient, ShapeMismatch, Singular
from refine.linear_core import as_matrix, fit_ols, fit_ridge, invert_square, ridge_inverse


def lstsq_with_intercept(X, Y):
    """Independent reference: least squares on [1, X] via numpy's SVD solver."""
    A = np.hstack([np.ones((X.shape[0], 1)), X])
    coef = np.linalg.lstsq(A, Y, rcond=None)[0]
    return coef[0], coef[1:]


def test_ols_matches_lstsq_with_intercept(rng):
    X = rng.standard_normal((80, 4))
    Y = X @ rng.standard_normal((4, 3)) + 2.0 + rng.standard_normal((80, 3))
    fit = fit_ols(X, Y)
    b0, B = lstsq_with_intercept(X, Y)
    np.testing.assert_allclose(fit.values, B, atol=1e-10)
    Xn = rng.standard_normal((5, 4))
    np.testing.assert_allclose(fit.predict(Xn), b0 + Xn @ B, atol=1e-10)


def test_ols_exact_on_noiseless_data(rng):
    X = rng.standard_normal((30, 3))
    B = np.array([[1.0, -2.0], [0.5, 0.0], [3.0, 1.0]])
    fit = fit_ols(X, X @ B - 1.5)
    np.testing.assert_allclose(fit.values, B, atol=1e-12)


def test_ols_refuses_collinear_design(rng):
    x = rng.standard_normal((50, 1))
    with pytest.raises(RankDeficient):
        fit_ols(np.hstack([x, 2 * x]), rng.standard_normal((50, 2)))


def test_ols_needs_more_rows_than_predictors(rng):
    with pytest.raises(RankDeficient):
        fit_ols(rng.standard_normal((3, 3)), rng.standard_normal((3, 1)))


def test_ols_row_mismatch(rng):
    with pytest.raises(ShapeMismatch):
        fit_ols(rng.standard_normal((10, 2)), rng.standard_normal((9, 2)))


def test_nonfinite_rejected():
    with pytest.raises(NonFinite):
        as_matrix([[1.0, np.nan]])


def test_ridge_zero_is_ols(rng):
    X = rng.standard_normal((40, 3))
    Y = rng.standard_normal((40, 2))
    np.testing.assert_allclose(fit_ridge(X, Y, 0.0).values, fit_ols(X, Y).values, atol=1e-10)


def test_ridge_closed_form(rng):
    X = rng.standard_normal((40, 3))
    Y = rng.standard_normal((40, 2))
    Xc, Yc = X - X.mean(0), Y - Y.mean(0)
    expect = np.linalg.inv(Xc.T @ Xc + 2.5 * np.eye(3)) @ Xc.T @ Yc
    np.testing.assert_allclose(fit_ridge(X, Y, 2.5).values, expect, atol=1e-10)


def test_ridge_shrinks(rng):
    X = rng.standard_normal((40, 3))
    Y = X @ np.ones((3, 1)) + rng.standard_normal((40, 1))
    norms = [np.linalg.norm(fit_ridge(X, Y, lam).values) for lam in (0.0, 1.0, 10.0, 100.0)]
    assert all(a > b for a, b in zip(norms, norms[1:]))


def test_ridge_rejects_negative_penalty(rng):
    with pytest.raises(ValueError):
        fit_ridge(rng.standard_normal((10, 2)), rng.standard_normal((10, 1)), -1.0)


def test_invert_square(rng):
    M = rng.standard_normal((4, 4)) + 4 * np.eye(4)
    np.testing.assert_allclose(invert_square(M) @ M, np.eye(4), atol=1e-12)


def test_invert_singular():
    with pytest.raises(Singular):
        invert_square(np.array([[1.0, 2.0], [2.0, 4.0]]))


def test_invert_requires_square():
    with pytest.raises(ShapeMismatch):
        invert_square(np.ones((2, 3)))


def test_ridge_inverse_limits(rng):
    M = rng.standard_normal((3, 3)) + 3 * np.eye(3)
    np.testing.assert_allclose(ridge_inverse(M, 0.0), np.linalg.inv(M), atol=1e-12)
    np.testing.assert_allclose(ridge_inverse(M, 1e-10), np.linalg.inv(M), atol=1e-7)
    assert np.linalg.norm(ridge_inverse(M, 10.0)) < np.linalg.norm(np.linalg.inv(M))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 5), st.integers(1, 4))
def test_ols_residuals_orthogonal(seed, p, m):
    rng = np.random.default_rng(seed)
    n = 10 + 3 * p
    X = rng.standard_normal((n, p))
    Y = rng.standard_normal((n, m)) + X @ rng.standard_normal((p, m))
    fit = fit_ols(X, Y)
    R = Y - fit.predict(X)
    scale = max(1.0, np.abs(Y).max()) * n
    assert np.abs((X - X.mean(0)).T @ R).max() <= 1e-9 * scale
    assert np.abs(R.sum(axis=0)).max() <= 1e-9 * scale


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(-5, 5), st.floats(0.1, 10))
def test_ols_affine_equivariance(seed, shift, scale):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((30, 3))
    Y = rng.standard_normal((30, 2))
    base = fit_ols(X, Y)
    moved = fit_ols(X + shift, scale * Y)
    np.testing.assert_allclose(moved.values, scale * base.values, rtol=1e-8, atol=1e-10)
