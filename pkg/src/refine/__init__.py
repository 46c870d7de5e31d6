"""Longitudinal prediction with a nonlinear item-aligned preprocessor and a linear decoder."""

from .data import DatasetSchema, LongitudinalDataset, load_csv, save_csv
from .errors import (
    DataError,
    InsufficientData,
    NumericalError,
    RankDeficient,
    RefineError,
    ShapeMismatch,
    Singular,
    TimePointError,
    UnknownTimePoint,
)
from .evaluation import (
    EvalConfig,
    EvaluationReport,
    Variant,
    bootstrap_evaluate,
    complexity_probe,
    rate_experiment,
)
from .linear_core import CoefficientMatrix, fit_ols, fit_ridge
from .metrics import backward_correlation, contribution_matrix, cosine_diagonal, forward_correlation
from .model import RefineModel, TimePointModel, fit_refine, fit_time_point, load_model, save_model
from .nonlinear_learner import ForestConfig, LearnerSpec, fit_learner, predict_learner
from .simulate import MARRule, OracleHandle, SyntheticSpec, oracle_mse, simulate

__version__ = "0.1.0"

__all__ = [
    "CoefficientMatrix",
    "DataError",
    "DatasetSchema",
    "EvalConfig",
    "EvaluationReport",
    "ForestConfig",
    "InsufficientData",
    "LearnerSpec",
    "LongitudinalDataset",
    "MARRule",
    "NumericalError",
    "OracleHandle",
    "RankDeficient",
    "RefineError",
    "RefineModel",
    "ShapeMismatch",
    "Singular",
    "SyntheticSpec",
    "TimePointError",
    "TimePointModel",
    "UnknownTimePoint",
    "Variant",
    "backward_correlation",
    "bootstrap_evaluate",
    "complexity_probe",
    "contribution_matrix",
    "cosine_diagonal",
    "fit_learner",
    "fit_ols",
    "fit_refine",
    "fit_ridge",
    "fit_time_point",
    "forward_correlation",
    "load_csv",
    "load_model",
    "oracle_mse",
    "predict_learner",
    "rate_experiment",
    "save_csv",
    "save_model",
    "simulate",
]
