import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from refine.errors import AllColumnsConstant, ShapeMismatch, ZeroDiagonal
from refine.metrics import (
    backward_correlation,
    contribution_matrix,
    cosine_diagonal,
    forward_correlation,
    item_correlations,
    skipped_items,
)


def test_item_correlations_match_scipy(rng):
    P = rng.standard_normal((50, 4))
    O = P + rng.standard_normal((50, 4))
    expect = [stats.pearsonr(P[:, j], O[:, j])[0] for j in range(4)]
    np.testing.assert_allclose(item_correlations(P, O), expect, atol=1e-12)
    assert forward_correlation(P, O) == pytest.approx(np.mean(expect))


def test_forward_identities(rng):
    O = rng.standard_normal((30, 3))
    assert forward_correlation(O, O) == pytest.approx(1.0)
    assert forward_correlation(-O, O) == pytest.approx(-1.0)
    assert forward_correlation(3 * O + 2, O) == pytest.approx(1.0)


def test_constant_columns(rng):
    O = rng.standard_normal((20, 3))
    O[:, 1] = 4.0
    P = rng.standard_normal((20, 3))
    r = item_correlations(P, O)
    assert np.isnan(r[1]) and skipped_items(O) == 1
    assert forward_correlation(P, O) == pytest.approx(np.nanmean(r))
    P[:, 0] = 1.0
    assert item_correlations(P, O)[0] == 0.0
    with pytest.raises(AllColumnsConstant):
        forward_correlation(P, np.ones((20, 3)))


def test_pooled_correlation(rng):
    O = rng.standard_normal((40, 2))
    P = O + 0.5 * rng.standard_normal((40, 2))
    Pc, Oc = (P - P.mean(0)).ravel(), (O - O.mean(0)).ravel()
    expect = Pc @ Oc / np.sqrt((Pc @ Pc) * (Oc @ Oc))
    assert forward_correlation(P, O, pooled=True) == pytest.approx(expect)


def test_shape_checks(rng):
    with pytest.raises(ShapeMismatch):
        forward_correlation(np.zeros((5, 2)), np.zeros((5, 3)))
    with pytest.raises(ShapeMismatch):
        forward_correlation(np.zeros((2, 2)), np.ones((2, 2)))


def test_cosine_values():
    assert cosine_diagonal(np.eye(4)) == pytest.approx(1.0)
    assert cosine_diagonal(np.ones((2, 2))) == pytest.approx(1 / np.sqrt(2), abs=1e-12)
    assert cosine_diagonal(np.diag([3.0, -4.0])) == pytest.approx(1.0)
    # ||(3, 4)|| / ||[[3, 12], [0, 4]]|| = 5 / 13
    assert cosine_diagonal(np.array([[3.0, 12.0], [0.0, 4.0]])) == pytest.approx(5 / 13)
    with pytest.raises(ZeroDiagonal):
        cosine_diagonal(np.array([[0.0, 1.0], [1.0, 0.0]]))
    with pytest.raises(ShapeMismatch):
        cosine_diagonal(np.ones((2, 3)))


def test_backward_noiseless_linear(rng):
    X = rng.standard_normal((300, 5))
    D = X @ rng.standard_normal((5, 3)) + 1.0
    assert backward_correlation(D[:200], X[:200], D[200:], X[200:], lam=0.0) == pytest.approx(1.0, abs=1e-9)
    # shrinkage leaves a linear image, correlation stays near 1
    assert backward_correlation(D[:200], X[:200], D[200:], X[200:], lam=1.0) > 0.999


def test_backward_unrelated_near_zero(rng):
    X = rng.standard_normal((4000, 3))
    D = rng.standard_normal((4000, 2))
    assert abs(backward_correlation(D[:2000], X[:2000], D[2000:], X[2000:])) < 0.05


def test_contribution_matrix_recovers_linear_map(rng):
    X0 = rng.standard_normal((100, 3))
    M = np.array([[1.0, 0.2, 0.0], [0.0, 2.0, 0.0], [0.5, 0.0, -1.0]])
    np.testing.assert_allclose(contribution_matrix(X0, X0 @ M + 3), M, atol=1e-10)
    with pytest.raises(ShapeMismatch):
        contribution_matrix(X0[:4], X0[:4])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.01, 100), st.floats(-50, 50))
def test_forward_invariant_to_positive_affine_maps(seed, a, b):
    rng = np.random.default_rng(seed)
    O = rng.standard_normal((25, 3))
    P = O + rng.standard_normal((25, 3))
    r = forward_correlation(P, O)
    assert -1.0 <= r <= 1.0
    assert forward_correlation(a * P + b, O) == pytest.approx(r, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 6))
def test_cosine_in_unit_interval(seed, d):
    M = np.random.default_rng(seed).standard_normal((d, d))
    c = cosine_diagonal(M)
    assert 0.0 < c <= 1.0
    assert cosine_diagonal(5 * M) == pytest.approx(c)
