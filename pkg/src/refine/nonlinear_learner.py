"""Multivariate regressors used as the preprocessing map.

Two learner kinds share one interface:

* ``random_forest``: a single multi-output forest. Splits maximize the
  reduction in across-target variance summed over all target columns and
  leaves store the target mean vector, so items borrow strength from each
  other inside every tree.
* ``linear``: centered OLS, used by the linear ablation.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Union

import numpy as np

from . import _backend
from . import _kernels_numpy
from .errors import InvalidSpec, ShapeMismatch
from .linear_core import CoefficientMatrix, as_matrix, fit_ols

if _backend.HAVE_NUMBA:
    from . import _kernels_numba
else:  # pragma: no cover
    _kernels_numba = None

KINDS = ("random_forest", "linear")
_UNLIMITED_DEPTH = 2**62


def _kernels(backend):
    return _kernels_numba if _backend.resolve(backend) == "numba" else _kernels_numpy


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 200
    mtry: Optional[int] = None  # None means ceil(sqrt(p))
    min_leaf: int = 5
    max_depth: Optional[int] = None
    bootstrap: bool = True
    bootstrap_fraction: float = 1.0
    n_jobs: int = 1

    def __post_init__(self):
        if self.n_trees < 1:
            raise InvalidSpec("n_trees must be >= 1")
        if self.min_leaf < 1:
            raise InvalidSpec("min_leaf must be >= 1")
        if self.mtry is not None and self.mtry < 1:
            raise InvalidSpec("mtry must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise InvalidSpec("max_depth must be >= 0")
        if not 0.0 < self.bootstrap_fraction <= 1.0:
            raise InvalidSpec("bootstrap_fraction must lie in (0, 1]")

    def resolved_mtry(self, p: int) -> int:
        mtry = self.mtry if self.mtry is not None else math.ceil(math.sqrt(p))
        if mtry > p:
            raise InvalidSpec(f"mtry={mtry} exceeds feature count {p}")
        return mtry


@dataclass(frozen=True)
class LearnerSpec:
    kind: str = "random_forest"
    forest: ForestConfig = field(default_factory=ForestConfig)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidSpec(f"learner kind must be one of {KINDS}, got {self.kind!r}")
        if self.seed < 0:
            raise InvalidSpec("seed must be a nonnegative integer")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "LearnerSpec":
        data = dict(data)
        forest = data.pop("forest", None) or {}
        return cls(forest=ForestConfig(**forest), **data)

    def with_seed(self, seed: int) -> "LearnerSpec":
        return LearnerSpec(kind=self.kind, forest=self.forest, seed=int(seed))


@dataclass(frozen=True)
class ForestModel:
    """Trees stored as flat node arrays; ``roots[s]`` indexes tree ``s``.

    Internal nodes send ``x[feature] <= threshold`` left. Leaves have
    ``left == -1`` and hold a target mean vector in ``value``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    roots: np.ndarray
    n_features: int
    target_min: np.ndarray
    target_max: np.ndarray
    degenerate: bool = False

    @property
    def n_targets(self) -> int:
        return self.value.shape[1]

    @property
    def n_trees(self) -> int:
        return len(self.roots)

    def predict(self, X, backend="auto") -> np.ndarray:
        X = _check_features(X, self.n_features)
        if X.shape[0] == 0:
            return np.zeros((0, self.n_targets))
        out = _kernels(backend).predict_forest(
            X, self.feature, self.threshold, self.left, self.right, self.value, self.roots
        )
        # leaf averaging is convex; clipping only removes rounding overshoot
        return np.minimum(np.maximum(out, self.target_min), self.target_max)


@dataclass(frozen=True)
class LinearLearner:
    coef: CoefficientMatrix
    degenerate: bool = False

    @property
    def n_features(self) -> int:
        return self.coef.n_predictors

    @property
    def n_targets(self) -> int:
        return self.coef.n_targets

    def predict(self, X, backend="auto") -> np.ndarray:
        X = _check_features(X, self.n_features)
        if X.shape[0] == 0:
            return np.zeros((0, self.n_targets))
        return self.coef.predict(X)


FittedLearner = Union[ForestModel, LinearLearner]


def _check_features(X, p):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1 and X.size == 0:
        X = X.reshape(0, p)
    if X.ndim != 2 or X.shape[1] != p:
        raise ShapeMismatch(f"expected {p} feature columns, got shape {X.shape}")
    return np.ascontiguousarray(X)


def _tree_inputs(n, p, cfg: ForestConfig, seed: int, tree: int):
    rng = np.random.default_rng(np.random.SeedSequence([seed, tree]))
    if cfg.bootstrap:
        size = max(1, int(math.ceil(cfg.bootstrap_fraction * n)))
        samples = rng.integers(0, n, size=size).astype(np.int64)
    else:
        samples = np.arange(n, dtype=np.int64)
    keys = rng.random((max(1, len(samples) // cfg.min_leaf), p))
    return samples, keys


def fit_forest(X, Y, cfg: ForestConfig, seed: int = 0, backend="auto") -> ForestModel:
    """Grow ``cfg.n_trees`` multi-output trees; tree ``s`` draws its own
    resample and feature-candidate stream from ``(seed, s)``."""
    X = np.ascontiguousarray(as_matrix(X, "features"))
    Y = np.ascontiguousarray(as_matrix(Y, "targets"))
    n, p = X.shape
    if Y.shape[0] != n:
        raise ShapeMismatch(f"features have {n} rows, targets have {Y.shape[0]}")
    if n == 0:
        raise ShapeMismatch("cannot fit a forest on zero rows")
    mtry = cfg.resolved_mtry(p)
    max_depth = _UNLIMITED_DEPTH if cfg.max_depth is None else cfg.max_depth
    kern = _kernels(backend)

    def grow(s):
        samples, keys = _tree_inputs(n, p, cfg, seed, s)
        return kern.build_tree(X, Y, samples, keys, mtry, cfg.min_leaf, max_depth)

    if cfg.n_jobs > 1:
        with ThreadPoolExecutor(cfg.n_jobs) as pool:
            trees = list(pool.map(grow, range(cfg.n_trees)))
    else:
        trees = [grow(s) for s in range(cfg.n_trees)]

    sizes = np.array([len(t[0]) for t in trees], dtype=np.int64)
    roots = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
    shift = lambda arr, off: np.where(arr >= 0, arr + off, -1)  # noqa: E731
    degenerate = bool(np.all(Y.min(axis=0) == Y.max(axis=0)))
    return ForestModel(
        feature=np.concatenate([t[0] for t in trees]),
        threshold=np.concatenate([t[1] for t in trees]),
        left=np.concatenate([shift(t[2], o) for t, o in zip(trees, roots)]),
        right=np.concatenate([shift(t[3], o) for t, o in zip(trees, roots)]),
        value=np.ascontiguousarray(np.vstack([t[4] for t in trees])),
        roots=roots,
        n_features=p,
        target_min=Y.min(axis=0),
        target_max=Y.max(axis=0),
        degenerate=degenerate,
    )


def fit_learner(spec: LearnerSpec, features, targets, backend="auto") -> FittedLearner:
    """Fit the learner described by ``spec``; deterministic given ``spec.seed``.

    When every target column is constant the fit still succeeds (the result
    predicts that constant) but ``degenerate`` is set and a warning issued.
    """
    features = as_matrix(features, "features")
    targets = as_matrix(targets, "targets")
    if features.shape[0] != targets.shape[0]:
        raise ShapeMismatch(
            f"features have {features.shape[0]} rows, targets have {targets.shape[0]}"
        )
    degenerate = features.shape[0] > 0 and bool(
        np.all(targets.min(axis=0) == targets.max(axis=0))
    )
    if degenerate:
        warnings.warn("all target columns are constant; learner predicts a constant", RuntimeWarning)

    if spec.kind == "linear":
        coef = fit_ols(features, targets)
        return LinearLearner(coef, degenerate=degenerate)
    return fit_forest(features, targets, spec.forest, seed=spec.seed, backend=backend)


def predict_learner(model: FittedLearner, features, backend="auto") -> np.ndarray:
    return model.predict(features, backend=backend)
