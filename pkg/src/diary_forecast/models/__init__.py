"""Regressors sharing the ``fit_* -> Regressor -> predict`` contract."""

from .base import Regressor, predict
from .baseline import baseline_predictions, baseline_rolling_mean
from .mlp import MLP, MlpSpec, fit_mlp
from .svr import EpsilonSVR, fit_svr
from .trees import GradientBoostedTrees, RandomForest, fit_gbt, fit_rf

__all__ = [
    "Regressor", "predict", "fit_gbt", "fit_rf", "fit_svr", "fit_mlp", "MlpSpec",
    "GradientBoostedTrees", "RandomForest", "EpsilonSVR", "MLP",
    "baseline_rolling_mean", "baseline_predictions",
]
