"""Ordinary least squares with honest prediction intervals.

An intercept column is always prepended internally, so an empty feature
matrix gives the intercept-only model. Intervals use the usual prediction
variance sigma2 * (1 + x0' (X'X)^{-1} x0), which carries the trend-estimation
uncertainty on top of the residual noise.
"""

from __future__ import annotations

import numpy as np

from ..errors import NumericalError
from ..kriging import GAUSS_95


class LinearRegression:
    kind = "reg"

    def __init__(self, beta: np.ndarray, sigma2: float, xtx_inv: np.ndarray):
        self.beta = beta
        self.sigma2 = sigma2
        self._xtx_inv = xtx_inv

    @staticmethod
    def _design(X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return np.column_stack([np.ones(X.shape[0]), X])

    def predict(self, X) -> np.ndarray:
        return self._design(X) @ self.beta

    def predict_variance(self, X) -> np.ndarray:
        d = self._design(X)
        return self.sigma2 * (1.0 + np.einsum("ij,jk,ik->i", d, self._xtx_inv, d))

    def predict_interval(self, X) -> tuple[np.ndarray, np.ndarray]:
        mean = self.predict(X)
        half = GAUSS_95 * np.sqrt(self.predict_variance(X))
        return mean - half, mean + half

    def to_dict(self) -> dict:
        return {
            "format": "geoblend-model",
            "version": 1,
            "kind": self.kind,
            "beta": self.beta.tolist(),
            "sigma2": self.sigma2,
            "xtx_inv": self._xtx_inv.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LinearRegression":
        return cls(np.array(d["beta"]), float(d["sigma2"]), np.array(d["xtx_inv"]))


def fit_regression(X, Y) -> LinearRegression:
    """OLS fit; raises on rank-deficient designs."""
    Y = np.asarray(Y, dtype=np.float64)
    d = LinearRegression._design(X)
    n, p = d.shape
    if np.linalg.matrix_rank(d) < p:
        raise NumericalError("regression design matrix is rank deficient")
    beta, _, _, _ = np.linalg.lstsq(d, Y, rcond=None)
    resid = Y - d @ beta
    dof = max(n - p, 1)
    sigma2 = float(resid @ resid) / dof
    xtx_inv = np.linalg.inv(d.T @ d)
    return LinearRegression(beta, sigma2, xtx_inv)
