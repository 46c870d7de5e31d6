"""Two-stage fit: follow-up-informed proxy, nonlinear preprocessor, linear decoder.

For each follow-up time ``t`` (complete cases only):

1. regress baseline items on follow-up items, ``X0 ~ Xt B_t``; the fitted
   values ``Xt B_t`` are the proxy, one column per baseline item;
2. decoder ``beta_t = B_t^{-1}`` (or, for the ablation, an OLS refit of
   ``Xt`` on in-sample preprocessor outputs);
3. fit the preprocessor ``h_t: (X0, Z) -> proxy`` with a multivariate learner.

Prediction is ``h_t(X0, Z) beta_t`` and needs baseline data only.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from .data import DatasetSchema, LongitudinalDataset
from .errors import InsufficientData, InvalidSpec, RefineError, ShapeMismatch, TimePointError
from .linear_core import CoefficientMatrix, as_matrix, fit_ols, invert_square, ridge_inverse
from .nonlinear_learner import (
    FittedLearner,
    ForestModel,
    LearnerSpec,
    LinearLearner,
    fit_learner,
    predict_learner,
)

DECODER_MODES = ("invert", "refit_ols")
FORMAT_NAME = "refine-model"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class TimePointModel:
    label: str
    B: CoefficientMatrix
    decoder: CoefficientMatrix
    preprocessor: FittedLearner
    decoder_mode: str
    n_t: int
    inverse_ridge: float = 0.0

    @property
    def beta(self) -> np.ndarray:
        return self.decoder.values

    @property
    def d(self) -> int:
        return self.B.n_predictors

    def anchoring_error(self) -> float:
        """``max |B_t beta_t - I|``; zero up to rounding for the inversion decoder."""
        return float(np.max(np.abs(self.B.values @ self.beta - np.eye(self.d))))


def _check_mode(mode):
    if mode not in DECODER_MODES:
        raise InvalidSpec(f"decoder mode must be one of {DECODER_MODES}, got {mode!r}")


def proxy_targets(B: CoefficientMatrix, Xt) -> np.ndarray:
    """Baseline items reconstructed from follow-up items, in item units."""
    return B.predict(Xt)


def decoder_by_inversion(B: CoefficientMatrix, ridge: float = 0.0) -> CoefficientMatrix:
    beta = invert_square(B.values) if ridge == 0 else ridge_inverse(B.values, ridge)
    # beta maps centered stabilized items (baseline means) to centered follow-ups
    return CoefficientMatrix(beta, B.target_means, B.predictor_means)


def decoder_by_refit(H, Xt) -> CoefficientMatrix:
    return fit_ols(H, Xt)


def fit_time_point(
    X0,
    Z,
    Xt,
    mask=None,
    spec: Optional[LearnerSpec] = None,
    mode: str = "invert",
    label="1",
    inverse_ridge: float = 0.0,
    backend="auto",
    preprocessor: Optional[FittedLearner] = None,
) -> TimePointModel:
    """Fit one follow-up time on the subjects observed there.

    ``mask`` marks observed rows; by default a row counts as observed when
    its follow-up values are all finite. A ``preprocessor`` already fitted
    on these same complete cases is reused instead of refitting.
    """
    _check_mode(mode)
    spec = spec or LearnerSpec()
    X0 = as_matrix(X0, "X0")
    n, d = X0.shape
    Z = np.asarray(Z, dtype=np.float64).reshape(n, -1)
    Xt = np.asarray(Xt, dtype=np.float64)
    if Xt.ndim != 2 or Xt.shape != (n, d):
        raise ShapeMismatch(f"Xt must be {n} x {d}, got {Xt.shape}")
    mask = np.all(np.isfinite(Xt), axis=1) if mask is None else np.asarray(mask, dtype=bool)
    if mask.shape != (n,):
        raise ShapeMismatch(f"mask must have length {n}")
    n_t = int(mask.sum())
    if n_t <= d:
        raise InsufficientData(f"{n_t} complete cases at time {label}; need more than d={d}")

    X0c, Zc, Xtc = X0[mask], Z[mask], as_matrix(Xt[mask], "Xt")
    B = fit_ols(Xtc, X0c)
    proxy = proxy_targets(B, Xtc)
    features = np.hstack([X0c, Zc])
    if mode == "invert":
        decoder = decoder_by_inversion(B, inverse_ridge)
    pre = preprocessor if preprocessor is not None else fit_learner(spec, features, proxy, backend=backend)
    if mode == "refit_ols":
        decoder = decoder_by_refit(predict_learner(pre, features, backend=backend), Xtc)
    return TimePointModel(
        label=str(label),
        B=B,
        decoder=decoder,
        preprocessor=pre,
        decoder_mode=mode,
        n_t=n_t,
        inverse_ridge=float(inverse_ridge) if mode == "invert" else 0.0,
    )


@dataclass(frozen=True)
class RefineModel:
    time_models: Tuple[TimePointModel, ...]
    schema: DatasetSchema
    learner_spec: LearnerSpec
    decoder_mode: str = "invert"

    def __post_init__(self):
        labels = tuple(tm.label for tm in self.time_models)
        if labels != self.schema.time_labels:
            raise InvalidSpec(f"time models {labels} do not match schema {self.schema.time_labels}")

    def time_model(self, t) -> TimePointModel:
        lab = self.schema.label(t)
        return self.time_models[self.schema.time_labels.index(lab)]

    def _features(self, X0, Z) -> np.ndarray:
        X0 = np.asarray(X0, dtype=np.float64)
        if X0.ndim == 1 and X0.size == 0:
            X0 = X0.reshape(0, self.schema.d)
        if X0.ndim != 2 or X0.shape[1] != self.schema.d:
            raise ShapeMismatch(f"X0 must have {self.schema.d} columns, got shape {X0.shape}")
        Z = np.asarray(Z, dtype=np.float64)
        if Z.size == 0 and (self.schema.q == 0 or X0.shape[0] == 0):
            Z = np.zeros((X0.shape[0], self.schema.q))
        if Z.ndim != 2 or Z.shape != (X0.shape[0], self.schema.q):
            raise ShapeMismatch(f"Z must be {X0.shape[0]} x {self.schema.q}, got shape {Z.shape}")
        return np.hstack([X0, Z])

    def preprocess(self, t, X0, Z, backend="auto") -> np.ndarray:
        """Stabilized, item-aligned baseline representation for time ``t``."""
        tm = self.time_model(t)
        return predict_learner(tm.preprocessor, self._features(X0, Z), backend=backend)

    def predict(self, t, X0, Z, backend="auto") -> np.ndarray:
        tm = self.time_model(t)
        H = predict_learner(tm.preprocessor, self._features(X0, Z), backend=backend)
        if H.shape[0] == 0:
            return np.zeros((0, self.schema.d))
        return tm.decoder.predict(H)

    def coefficient_matrix(self, t) -> np.ndarray:
        """The global decoder: rows are stabilized baseline items, columns follow-up items."""
        return self.time_model(t).beta.copy()

    def save(self, path) -> None:
        save_model(self, path)


def fit_refine(
    dataset: LongitudinalDataset,
    spec: Optional[LearnerSpec] = None,
    mode: str = "invert",
    inverse_ridge: float = 0.0,
    backend="auto",
) -> RefineModel:
    """Fit every follow-up time independently on its complete cases."""
    _check_mode(mode)
    spec = spec or LearnerSpec()
    models = []
    for t in dataset.schema.time_labels:
        try:
            tm = fit_time_point(
                dataset.X0,
                dataset.Z,
                dataset.followups[t],
                mask=dataset.masks[t],
                spec=spec,
                mode=mode,
                label=t,
                inverse_ridge=inverse_ridge,
                backend=backend,
            )
        except RefineError as exc:
            raise TimePointError(t, exc) from exc
        models.append(tm)
    return RefineModel(tuple(models), dataset.schema, spec, mode)


def preprocess(model: RefineModel, t, X0, Z) -> np.ndarray:
    return model.preprocess(t, X0, Z)


def predict(model: RefineModel, t, X0, Z) -> np.ndarray:
    return model.predict(t, X0, Z)


def coefficient_matrix(model: RefineModel, t) -> np.ndarray:
    return model.coefficient_matrix(t)


# -- serialization ----------------------------------------------------------
#
# model.bin is an uncompressed .npz archive. Entry "meta" holds UTF-8 JSON
# (format name/version, schema, learner spec, per-time scalars); every array
# is stored verbatim, so reloaded predictions are bit-identical.

_COEF = ("values", "predictor_means", "target_means")
_FOREST = ("feature", "threshold", "left", "right", "value", "roots", "target_min", "target_max")


def _coef_arrays(prefix, coef, out):
    for name in _COEF:
        out[f"{prefix}/{name}"] = getattr(coef, name)


def _coef_from(prefix, arrays):
    return CoefficientMatrix(*(arrays[f"{prefix}/{name}"] for name in _COEF))


def save_model(model: RefineModel, path) -> None:
    arrays = {}
    times = []
    for k, tm in enumerate(model.time_models):
        _coef_arrays(f"t{k}/B", tm.B, arrays)
        _coef_arrays(f"t{k}/decoder", tm.decoder, arrays)
        pre = tm.preprocessor
        if isinstance(pre, ForestModel):
            for name in _FOREST:
                arrays[f"t{k}/forest/{name}"] = getattr(pre, name)
            pre_meta = {"kind": "random_forest", "n_features": pre.n_features}
        else:
            _coef_arrays(f"t{k}/linear", pre.coef, arrays)
            pre_meta = {"kind": "linear"}
        pre_meta["degenerate"] = bool(pre.degenerate)
        times.append(
            {
                "label": tm.label,
                "decoder_mode": tm.decoder_mode,
                "n_t": tm.n_t,
                "inverse_ridge": tm.inverse_ridge,
                "preprocessor": pre_meta,
            }
        )
    meta = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "schema": model.schema.to_dict(),
        "learner_spec": model.learner_spec.to_dict(),
        "decoder_mode": model.decoder_mode,
        "time_points": times,
    }
    arrays["meta"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    Path(path).write_bytes(buf.getvalue())


def load_model(path) -> RefineModel:
    with np.load(path, allow_pickle=False) as npz:
        arrays = {k: npz[k] for k in npz.files}
    try:
        meta = json.loads(arrays.pop("meta").tobytes().decode("utf-8"))
    except KeyError:
        raise InvalidSpec(f"{path} is not a model file (no metadata entry)") from None
    if meta.get("format") != FORMAT_NAME:
        raise InvalidSpec(f"{path}: unexpected format {meta.get('format')!r}")
    if meta.get("version") != FORMAT_VERSION:
        raise InvalidSpec(f"{path}: unsupported model format version {meta.get('version')}")
    models = []
    for k, tmeta in enumerate(meta["time_points"]):
        pmeta = tmeta["preprocessor"]
        if pmeta["kind"] == "random_forest":
            fa = {name: arrays[f"t{k}/forest/{name}"] for name in _FOREST}
            pre = ForestModel(n_features=pmeta["n_features"], degenerate=pmeta["degenerate"], **fa)
        else:
            pre = LinearLearner(_coef_from(f"t{k}/linear", arrays), degenerate=pmeta["degenerate"])
        models.append(
            TimePointModel(
                label=tmeta["label"],
                B=_coef_from(f"t{k}/B", arrays),
                decoder=_coef_from(f"t{k}/decoder", arrays),
                preprocessor=pre,
                decoder_mode=tmeta["decoder_mode"],
                n_t=tmeta["n_t"],
                inverse_ridge=tmeta["inverse_ridge"],
            )
        )
    return RefineModel(
        tuple(models),
        DatasetSchema.from_dict(meta["schema"]),
        LearnerSpec.from_dict(meta["learner_spec"]),
        meta["decoder_mode"],
    )
