"""Survival trees and forests for length-biased right-censored data."""

from .cif import ForestConfig, ForestModel, forest_weights, grow_forest, predict_forest, tune_mtry
from .cit import TreeConfig, TreeModel, grow_tree, linear_statistic, predict_tree
from .curves import StepCurve, eval_at, integrate_step
from .dataset import Covariate, Dataset, load_csv, save_csv, validate
from .estimators import Backend, EmConfig, em_loglik, km_ltrc, mcle, mfle
from .metrics import brier, ibs, integrated_l2, stationarity_curves
from .scores import lbrc_scores, ltrc_scores
from .serialize import load_model, save_model
from .simgen import ScenarioSpec, TrueModel, calibrate_censoring, recovery_check, sample_lbrc

__version__ = "0.1.0"

__all__ = [
    "Backend", "Covariate", "Dataset", "EmConfig", "ForestConfig", "ForestModel", "ScenarioSpec",
    "StepCurve", "TreeConfig", "TreeModel", "TrueModel", "brier", "calibrate_censoring", "em_loglik",
    "eval_at", "forest_weights", "grow_forest", "grow_tree", "ibs", "integrate_step",
    "integrated_l2", "km_ltrc", "lbrc_scores", "linear_statistic", "load_csv", "load_model",
    "ltrc_scores", "mcle", "mfle", "predict_forest", "predict_tree", "recovery_check",
    "sample_lbrc", "save_csv", "save_model", "stationarity_curves", "tune_mtry", "validate",
]
