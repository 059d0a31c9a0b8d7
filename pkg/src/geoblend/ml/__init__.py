"""Non-geostatistical predictors behind a uniform fit/predict contract.

Every model registers under a string key for CLI selection; ``reg`` and
``rf`` also provide 95% prediction intervals, ``svr`` and ``enn`` do not.
"""

from .regression import LinearRegression, fit_regression
from .forest import RandomForest, RandomForestConfig, fit_forest, forest_interval
from .svr import SvrConfig, SvrModel, dual_objective, fit_svr, svr_predict, tune_svr
from .enn import EnnConfig, EnnModel, Mlp, fit_enn

ML_MODEL_KEYS = ("reg", "rf", "svr", "enn")

__all__ = [
    "LinearRegression",
    "fit_regression",
    "RandomForest",
    "RandomForestConfig",
    "fit_forest",
    "forest_interval",
    "SvrConfig",
    "SvrModel",
    "fit_svr",
    "svr_predict",
    "tune_svr",
    "dual_objective",
    "EnnConfig",
    "EnnModel",
    "Mlp",
    "fit_enn",
    "ML_MODEL_KEYS",
]
