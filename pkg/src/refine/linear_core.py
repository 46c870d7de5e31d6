"""Dense linear algebra: centered OLS, ridge, and guarded inversion.

All fitters center predictors and targets with their training means and
store those means, so ``CoefficientMatrix.predict`` works on raw data with
no explicit intercept column.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import NonFinite, RankDeficient, ShapeMismatch, Singular

COND_LIMIT = 1e12


def as_matrix(a, name="matrix") -> np.ndarray:
    """Coerce to a finite 2-D float64 array (1-D input becomes one column)."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ShapeMismatch(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFinite(f"{name} contains non-finite entries")
    return a


@dataclass(frozen=True)
class CoefficientMatrix:
    """Linear map between centered spaces, with the means used to center."""

    values: np.ndarray
    predictor_means: np.ndarray
    target_means: np.ndarray

    def __post_init__(self):
        p, m = self.values.shape
        if self.predictor_means.shape != (p,) or self.target_means.shape != (m,):
            raise ShapeMismatch("mean vectors do not match coefficient shape")

    @property
    def n_predictors(self) -> int:
        return self.values.shape[0]

    @property
    def n_targets(self) -> int:
        return self.values.shape[1]

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_predictors:
            raise ShapeMismatch(
                f"expected {self.n_predictors} predictor columns, got shape {X.shape}"
            )
        return (X - self.predictor_means) @ self.values + self.target_means


def _centered(X, Y):
    X = as_matrix(X, "X")
    Y = as_matrix(Y, "Y")
    if X.shape[0] != Y.shape[0]:
        raise ShapeMismatch(f"row counts differ: X has {X.shape[0]}, Y has {Y.shape[0]}")
    x_mean = X.mean(axis=0)
    y_mean = Y.mean(axis=0)
    return X - x_mean, Y - y_mean, x_mean, y_mean


def fit_ols(X, Y, cond_limit: float = COND_LIMIT) -> CoefficientMatrix:
    """Multivariate least squares of ``Y`` on ``X`` through the normal equations.

    The Gram matrix of the centered predictors is Cholesky-factored. If its
    condition number exceeds ``cond_limit`` the fit is refused with
    ``RankDeficient`` instead of being silently regularized.
    """
    Xc, Yc, x_mean, y_mean = _centered(X, Y)
    n, p = Xc.shape
    if n <= p:
        raise RankDeficient(f"need more rows than predictors (n={n}, p={p})")
    gram = Xc.T @ Xc
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > cond_limit:
        raise RankDeficient(f"Gram matrix condition number {cond:.3g} exceeds {cond_limit:.3g}")
    factor = linalg.cho_factor(gram, lower=False, check_finite=False)
    B = linalg.cho_solve(factor, Xc.T @ Yc, check_finite=False)
    return CoefficientMatrix(B, x_mean, y_mean)


def fit_ridge(X, Y, lam: float) -> CoefficientMatrix:
    """Ridge regression on centered data; ``lam = 0`` is plain least squares."""
    if not np.isfinite(lam) or lam < 0:
        raise ValueError(f"ridge penalty must be a finite nonnegative number, got {lam}")
    Xc, Yc, x_mean, y_mean = _centered(X, Y)
    p = Xc.shape[1]
    A = Xc.T @ Xc + lam * np.eye(p)
    # lstsq keeps lam = 0 usable on rank-deficient designs (minimum-norm solution)
    B = np.linalg.lstsq(A, Xc.T @ Yc, rcond=None)[0] if lam == 0 else linalg.solve(
        A, Xc.T @ Yc, assume_a="pos", check_finite=False
    )
    return CoefficientMatrix(B, x_mean, y_mean)


def invert_square(M, cond_limit: float = COND_LIMIT) -> np.ndarray:
    """Inverse of a square matrix, refusing ill-conditioned input.

    Raises ``Singular`` when the 2-norm condition number exceeds ``cond_limit``.
    For a decoder this means the follow-up items do not carry enough
    redundancy to reconstruct the baseline items.
    """
    M = as_matrix(M, "M")
    if M.shape[0] != M.shape[1]:
        raise ShapeMismatch(f"matrix must be square, got {M.shape}")
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > cond_limit:
        raise Singular(f"condition number {cond:.3g} exceeds {cond_limit:.3g}")
    return linalg.inv(M, check_finite=False)


def ridge_inverse(M, lam: float) -> np.ndarray:
    """Tikhonov-stabilized inverse ``(M^T M + lam I)^{-1} M^T``.

    Biased toward zero for ``lam > 0``; equals the inverse at ``lam = 0``.
    """
    M = as_matrix(M, "M")
    if M.shape[0] != M.shape[1]:
        raise ShapeMismatch(f"matrix must be square, got {M.shape}")
    if lam == 0:
        return invert_square(M)
    d = M.shape[0]
    return linalg.solve(M.T @ M + lam * np.eye(d), M.T, assume_a="pos")
