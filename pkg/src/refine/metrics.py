"""Forward/backward correlation, contribution matrix, and diagonal cosine."""

from __future__ import annotations

import numpy as np

from .errors import AllColumnsConstant, ShapeMismatch, ZeroDiagonal
from .linear_core import as_matrix, fit_ols, fit_ridge


def item_correlations(pred, obs) -> np.ndarray:
    """Per-item Pearson correlation; NaN where the observed column is constant.

    A constant prediction column against a varying observed column scores 0.
    """
    pred = as_matrix(pred, "pred")
    obs = as_matrix(obs, "obs")
    if pred.shape != obs.shape:
        raise ShapeMismatch(f"pred {pred.shape} and obs {obs.shape} differ")
    if pred.shape[0] < 3:
        raise ShapeMismatch("need at least 3 rows for a correlation")
    pc = pred - pred.mean(axis=0)
    oc = obs - obs.mean(axis=0)
    sp = np.sqrt(np.sum(pc * pc, axis=0))
    so = np.sqrt(np.sum(oc * oc, axis=0))
    obs_const = np.ptp(obs, axis=0) == 0
    pred_const = np.ptp(pred, axis=0) == 0
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.sum(pc * oc, axis=0) / (sp * so)
    r = np.where(pred_const, 0.0, np.clip(r, -1.0, 1.0))
    return np.where(obs_const, np.nan, r)


def forward_correlation(pred, obs, pooled: bool = False) -> float:
    """Mean over items of the Pearson correlation between predicted and observed columns.

    Items whose observed column is constant are skipped (see
    ``item_correlations``). With ``pooled=True`` all items are flattened into
    one correlation after per-item centering instead.
    """
    r = item_correlations(pred, obs)
    if np.all(np.isnan(r)):
        raise AllColumnsConstant("every observed item column is constant")
    if not pooled:
        return float(np.nanmean(r))
    keep = ~np.isnan(r)
    p = np.asarray(pred, dtype=np.float64)[:, keep]
    o = np.asarray(obs, dtype=np.float64)[:, keep]
    p = (p - p.mean(axis=0)).ravel()
    o = (o - o.mean(axis=0)).ravel()
    denom = np.sqrt(p @ p * (o @ o))
    return 0.0 if denom == 0 else float(np.clip(p @ o / denom, -1.0, 1.0))


def skipped_items(obs) -> int:
    obs = as_matrix(obs, "obs")
    return int(np.sum(np.ptp(obs, axis=0) == 0))


def _standardizer(X):
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    return mu, np.where(sd > 0, sd, 1.0)


def backward_correlation(
    derived_train, Xt_train, derived_test, Xt_test, lam: float = 1.0, standardize: bool = True, pooled: bool = False
) -> float:
    """How well follow-up items reconstruct a baseline-derived representation.

    A ridge map ``Xt -> derived`` is fit on the training rows (follow-up
    columns standardized with training statistics) and scored on the test
    rows with ``forward_correlation``.
    """
    Xt_train = as_matrix(Xt_train, "Xt_train")
    Xt_test = as_matrix(Xt_test, "Xt_test")
    if Xt_train.shape[0] < 3:
        raise ShapeMismatch("need at least 3 training rows")
    if standardize:
        mu, sd = _standardizer(Xt_train)
        Xt_train = (Xt_train - mu) / sd
        Xt_test = (Xt_test - mu) / sd
    ridge = fit_ridge(Xt_train, derived_train, lam)
    return forward_correlation(ridge.predict(Xt_test), derived_test, pooled=pooled)


def contribution_matrix(X0_test, predictions) -> np.ndarray:
    """Global linear surrogate of a predictor: OLS of predictions on baseline items.

    Entry ``(i, j)`` is the contribution of baseline item ``i`` to predicted
    follow-up item ``j``. Applied identically to every model variant.
    """
    X0_test = as_matrix(X0_test, "X0_test")
    d = X0_test.shape[1]
    if X0_test.shape[0] < d + 2:
        raise ShapeMismatch(f"need at least d + 2 = {d + 2} rows, got {X0_test.shape[0]}")
    return fit_ols(X0_test, predictions).values


def cosine_diagonal(M) -> float:
    """Cosine similarity between ``M`` and its diagonal part: ``||diag M|| / ||M||``."""
    M = as_matrix(M, "M")
    if M.shape[0] != M.shape[1]:
        raise ShapeMismatch(f"contribution matrix must be square, got {M.shape}")
    diag = np.diag(M)
    dnorm = np.sqrt(diag @ diag)
    if dnorm == 0:
        raise ZeroDiagonal("every diagonal entry is zero; similarity undefined")
    return float(min(1.0, dnorm / np.linalg.norm(M)))
