"""Universal kriging: GLS trend, EBLUP prediction, and trend-aware variance.

The predictor at a new site is ``x0' beta_gls + c' Sigma^{-1} (Y - X beta_gls)``
and its variance is ``c00 - c' Sigma^{-1} c + kappa`` where ``kappa`` accounts
for the estimated (rather than known) trend coefficients. Covariance
parameters are estimated by Gaussian maximum likelihood with the trend
profiled out, multi-started to dodge local optima.
"""

from __future__ import annotations

import warnings

import numpy as np
from scipy import linalg as sla

from . import covariance as cov_mod
from ._linalg import OptResult, chol_factor, clamp_variances, multi_start_maximize
from .covariance import CovarianceParams, as_point_arrays
from .errors import NumericalError

GAUSS_95 = 1.96

DEFAULT_N_MAX = 4000

# log-parameter search box: (sigma_s, rho_s, rho_t, nugget)
_LOG_BOUNDS = [(-7.0, 7.0), (-5.0, 14.0), (-5.0, 14.0), (-21.0, 7.0)]


def _params_from_log(x) -> CovarianceParams:
    return CovarianceParams(
        sigma_s=float(np.exp(x[0])),
        rho_s=float(np.exp(x[1])),
        rho_t=float(np.exp(x[2])),
        nugget=float(np.exp(x[3])),
    )


def _log_from_params(p: CovarianceParams, nugget_floor=1e-9) -> np.ndarray:
    return np.log([p.sigma_s, p.rho_s, p.rho_t, max(p.nugget, nugget_floor)])


def profiled_loglik(lon, lat, hour, X, Y, params: CovarianceParams, metric: str):
    """Gaussian log-likelihood with beta profiled out by GLS.

    Returns (loglik, beta_gls).
    """
    n = Y.shape[0]
    sigma = cov_mod.cov_matrix((lon, lat, hour), params, metric)
    factor = chol_factor(sigma)
    si_x = sla.cho_solve(factor, X)
    si_y = sla.cho_solve(factor, Y)
    gram = X.T @ si_x
    beta = sla.solve(gram, X.T @ si_y, assume_a="pos")
    resid = Y - X @ beta
    quad = float(resid @ sla.cho_solve(factor, resid))
    logdet = 2.0 * float(np.sum(np.log(np.diag(factor[0]))))
    ll = -0.5 * (n * np.log(2.0 * np.pi) + logdet + quad)
    return ll, beta


class KrigingModel:
    """A fitted universal-kriging predictor (immutable after construction)."""

    kind = "kriging"

    def __init__(self, points, X, Y, params: CovarianceParams, metric: str = "haversine", opt: OptResult | None = None):
        lon, lat, hour = as_point_arrays(points)
        X = np.ascontiguousarray(X, dtype=np.float64)
        Y = np.ascontiguousarray(Y, dtype=np.float64)
        n, p = X.shape
        if Y.shape[0] != n or lon.shape[0] != n:
            raise ValueError("points, X and Y must agree in length")
        if params.nugget == 0.0:
            coords = np.column_stack([lon, lat, hour])
            if np.unique(coords, axis=0).shape[0] != n:
                raise NumericalError("duplicate space-time points require a positive nugget")
        self.lon, self.lat, self.hour = lon, lat, hour
        self.X, self.Y = X, Y
        self.params = params
        self.metric = metric
        self.opt = opt
        self.n_var_clamped = 0

        sigma = cov_mod.cov_matrix((lon, lat, hour), params, metric)
        self._factor = chol_factor(sigma)
        self._si_x = sla.cho_solve(self._factor, X)
        self._gram = X.T @ self._si_x
        beta = sla.solve(self._gram, X.T @ sla.cho_solve(self._factor, Y), assume_a="pos")
        self.beta = beta
        self._resid_weights = sla.cho_solve(self._factor, Y - X @ beta)

    @property
    def n_train(self) -> int:
        return self.Y.shape[0]

    def predict(self, targets, X0) -> tuple[np.ndarray, np.ndarray]:
        """Predict mean and variance at target points with trend rows X0."""
        tlon, tlat, thour = as_point_arrays(targets)
        X0 = np.atleast_2d(np.asarray(X0, dtype=np.float64))
        if X0.shape[1] != self.X.shape[1]:
            raise ValueError(f"trend vector has {X0.shape[1]} columns, model expects {self.X.shape[1]}")
        c = cov_mod.cross_cov_matrix((self.lon, self.lat, self.hour), (tlon, tlat, thour), self.params, self.metric)
        mean = X0 @ self.beta + c.T @ self._resid_weights

        si_c = sla.cho_solve(self._factor, c)
        quad = np.einsum("ij,ij->j", c, si_c)
        u = X0.T - self._si_x.T @ c
        kappa = np.einsum("ij,ij->j", u, sla.solve(self._gram, u, assume_a="pos"))
        c00 = self.params.sill + self.params.nugget
        var, clamped = clamp_variances(c00 - quad + kappa)
        self.n_var_clamped += clamped
        return mean, var

    def predict_point(self, target, x0) -> tuple[float, float]:
        mean, var = self.predict([target], np.asarray(x0, dtype=np.float64)[None, :])
        return float(mean[0]), float(var[0])

    def loglik(self) -> float:
        ll, _ = profiled_loglik(self.lon, self.lat, self.hour, self.X, self.Y, self.params, self.metric)
        return ll

    def to_dict(self) -> dict:
        return {
            "format": "geoblend-model",
            "version": 1,
            "kind": self.kind,
            "metric": self.metric,
            "params": self.params.to_dict(),
            "beta": self.beta.tolist(),
            "lon": self.lon.tolist(),
            "lat": self.lat.tolist(),
            "hour": self.hour.tolist(),
            "X": self.X.tolist(),
            "Y": self.Y.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KrigingModel":
        points = (np.array(d["lon"]), np.array(d["lat"]), np.array(d["hour"]))
        return cls(points, np.array(d["X"]), np.array(d["Y"]), CovarianceParams.from_dict(d["params"]), d["metric"])


def fit_mle(
    points,
    X,
    Y,
    init: CovarianceParams,
    metric: str = "haversine",
    n_starts: int = 3,
    seed: int = 0,
    maxiter: int = 200,
    n_max: int = DEFAULT_N_MAX,
) -> KrigingModel:
    """Maximum-likelihood fit of the covariance parameters, trend profiled.

    Training sets larger than ``n_max`` are deterministically subsampled
    (dense Cholesky cost grows cubically; this keeps the method desk-runnable)
    with a warning.
    """
    lon, lat, hour = as_point_arrays(points)
    X = np.ascontiguousarray(X, dtype=np.float64)
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    n, p = X.shape
    if n < p + 2:
        raise ValueError(f"need at least p + 2 = {p + 2} rows, got {n}")
    if np.linalg.matrix_rank(X) < p:
        raise NumericalError("trend design matrix is rank deficient")

    if n > n_max:
        warnings.warn(f"training size {n} exceeds n_max={n_max}; subsampling for the dense fit", RuntimeWarning)
        keep = np.sort(np.random.default_rng(seed).choice(n, size=n_max, replace=False))
        lon, lat, hour, X, Y = lon[keep], lat[keep], hour[keep], X[keep], Y[keep]

    def neg_ll(x):
        try:
            ll, _ = profiled_loglik(lon, lat, hour, X, Y, _params_from_log(x), metric)
        except NumericalError:
            return 1e12
        return -ll if np.isfinite(ll) else 1e12

    opt = multi_start_maximize(neg_ll, _log_from_params(init), _LOG_BOUNDS, n_starts=n_starts, seed=seed, maxiter=maxiter)
    return KrigingModel((lon, lat, hour), X, Y, _params_from_log(opt.x), metric, opt=opt)


def predict(model: KrigingModel, target, x0) -> tuple[float, float]:
    """Point prediction (mean, variance) at one target site."""
    return model.predict_point(target, x0)


def prediction_interval(mean, variance):
    """Central 95% prediction interval: mean +/- 1.96 * sqrt(variance)."""
    variance = np.asarray(variance, dtype=np.float64)
    if np.any(variance < 0):
        raise ValueError("variance must be nonnegative")
    half = GAUSS_95 * np.sqrt(variance)
    return mean - half, mean + half
