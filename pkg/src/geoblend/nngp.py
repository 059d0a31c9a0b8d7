"""Nearest-neighbor Gaussian process via the Vecchia factorization.

The joint Gaussian density is replaced by a product of per-observation
conditionals, each conditioning on at most ``m`` previously ordered
neighbors. Observations are ordered by (hour, lon, lat, input position);
the neighbor pool for an observation at hour t is the prior-ordered
observations with hour in [t-1, t] (same hour plus temporal lag 1), and the
m spatially nearest are kept. Row-wise conditional coefficients form the
sparse Cholesky factor of the approximate precision, so likelihood
evaluation costs O(n m^3).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import accel
from . import covariance as cov_mod
from ._linalg import OptResult, clamp_variances, multi_start_maximize
from .covariance import CovarianceParams, as_point_arrays, metric_code
from .errors import NumericalError
from .kriging import _log_from_params, _params_from_log

DEFAULT_M = 15

_LOG_BOUNDS = [(-7.0, 7.0), (-5.0, 14.0), (-5.0, 14.0), (-21.0, 7.0)]


@dataclass
class NeighborGraph:
    """Ordered observations plus per-row neighbor sets (positions, -1 padded)."""

    ordering: np.ndarray  # original index of each ordered position
    nbr: np.ndarray  # (n, m) positions into the ordered arrays
    lon: np.ndarray  # ordered coordinates
    lat: np.ndarray
    hour: np.ndarray
    m: int
    metric: str

    @property
    def n(self) -> int:
        return self.ordering.shape[0]

    def neighbor_counts(self) -> np.ndarray:
        return (self.nbr >= 0).sum(axis=1)


def _nearest_in_window(lon, lat, cand, t_lon, t_lat, m, metric):
    """Positions of the m spatially nearest candidates (ties: earliest position)."""
    if cand.size == 0:
        return cand
    if metric == accel.METRIC_EUCLIDEAN:
        d = np.hypot(lon[cand] - t_lon, lat[cand] - t_lat)
    else:
        d = cov_mod.haversine_km(t_lon, t_lat, lon[cand], lat[cand])
    if cand.size <= m:
        return cand[np.lexsort((cand, d))]
    pick = np.lexsort((cand, d))[:m]
    return cand[pick]


def build_neighbors(points, m: int, metric: str = "haversine") -> NeighborGraph:
    """Construct the ordered neighbor graph for the Vecchia factorization."""
    if m < 1:
        raise ValueError("m must be >= 1")
    lon, lat, hour = as_point_arrays(points)
    n = lon.shape[0]
    ordering = np.lexsort((np.arange(n), lat, lon, hour))
    olon, olat, ohour = lon[ordering], lat[ordering], hour[ordering]
    code = metric_code(metric)

    nbr = np.full((n, m), -1, dtype=np.int64)
    for i in range(1, n):
        lo = np.searchsorted(ohour, ohour[i] - 1.0, side="left")
        cand = np.arange(lo, i)
        chosen = _nearest_in_window(olon, olat, cand, olon[i], olat[i], m, code)
        nbr[i, : chosen.size] = chosen
    return NeighborGraph(ordering=ordering, nbr=nbr, lon=olon, lat=olat, hour=ohour, m=m, metric=metric)


def _factor(graph: NeighborGraph, params: CovarianceParams):
    try:
        coef, cond_var = accel.vecchia_factor(
            graph.lon, graph.lat, graph.hour, graph.nbr,
            params.sill, params.rho_s, params.rho_t, params.nugget, metric_code(graph.metric),
        )
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"singular neighbor covariance in Vecchia factor: {exc}") from exc
    if np.any(cond_var <= 0.0) or not np.all(np.isfinite(coef)):
        raise NumericalError("non-positive conditional variance in Vecchia factor (invalid params)")
    return coef, cond_var


def _whiten(values, graph: NeighborGraph, coef, cond_var):
    """Apply the sparse whitening map row-wise: (v_i - coef . v_N) / sqrt(d_i).

    ``values`` may be a vector or a matrix of columns, in original order.
    """
    v = np.asarray(values, dtype=np.float64)
    squeeze = v.ndim == 1
    v2 = v[graph.ordering].reshape(graph.n, -1)
    mask = graph.nbr >= 0
    safe = np.where(mask, graph.nbr, 0)
    gathered = np.where(mask[:, :, None], v2[safe], 0.0)
    out = (v2 - np.einsum("im,imk->ik", coef, gathered)) / np.sqrt(cond_var)[:, None]
    return out[:, 0] if squeeze else out


def vecchia_loglik(Y, X, graph: NeighborGraph, params: CovarianceParams, beta) -> float:
    """Approximate log-density: sum of conditional Gaussian log-densities."""
    Y = np.asarray(Y, dtype=np.float64)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    beta = np.asarray(beta, dtype=np.float64)
    coef, cond_var = _factor(graph, params)
    e = _whiten(Y - X @ beta, graph, coef, cond_var)
    return float(-0.5 * (graph.n * np.log(2.0 * np.pi) + np.sum(np.log(cond_var)) + e @ e))


class NngpModel:
    """Fitted NNGP: covariance parameters, trend, and the sparse factor."""

    kind = "nngp"

    def __init__(self, points, X, Y, params: CovarianceParams, graph: NeighborGraph | None = None,
                 m: int = DEFAULT_M, metric: str = "haversine", opt: OptResult | None = None):
        lon, lat, hour = as_point_arrays(points)
        X = np.ascontiguousarray(X, dtype=np.float64)
        Y = np.ascontiguousarray(Y, dtype=np.float64)
        if X.shape[0] != Y.shape[0] or X.shape[0] != lon.shape[0]:
            raise ValueError("points, X and Y must agree in length")
        if X.shape[0] == 0:
            raise ValueError("empty training set")
        self.graph = graph if graph is not None else build_neighbors((lon, lat, hour), m, metric)
        self.params = params
        self.metric = self.graph.metric
        self.m = self.graph.m
        self.X, self.Y = X, Y
        self.opt = opt
        self.n_var_clamped = 0

        self.coef, self.cond_var = _factor(self.graph, params)
        ex = _whiten(X, self.graph, self.coef, self.cond_var)
        ey = _whiten(Y, self.graph, self.coef, self.cond_var)
        self.beta, *_ = np.linalg.lstsq(ex, ey, rcond=None)
        # ordered residuals drive all predictions
        resid = Y - X @ self.beta
        self._resid_ordered = np.ascontiguousarray(resid[self.graph.ordering])

    @property
    def n_train(self) -> int:
        return self.Y.shape[0]

    def loglik(self) -> float:
        return vecchia_loglik(self.Y, self.X, self.graph, self.params, self.beta)

    def _target_neighbors(self, tlon, tlat, thour) -> np.ndarray:
        g = self.graph
        code = metric_code(self.metric)
        q = tlon.shape[0]
        nbr = np.full((q, self.m), -1, dtype=np.int64)
        for i in range(q):
            lo = np.searchsorted(g.hour, thour[i] - 1.0, side="left")
            hi = np.searchsorted(g.hour, thour[i], side="right")
            cand = np.arange(lo, hi)
            chosen = _nearest_in_window(g.lon, g.lat, cand, tlon[i], tlat[i], self.m, code)
            nbr[i, : chosen.size] = chosen
        return nbr

    def predict(self, targets, X0) -> tuple[np.ndarray, np.ndarray]:
        """Conditional-Gaussian prediction at target points.

        The conditioning set per target is the m spatially nearest training
        observations with hour in [t-1, t]; an empty pool falls back to the
        trend with full marginal variance.
        """
        tlon, tlat, thour = as_point_arrays(targets)
        X0 = np.atleast_2d(np.asarray(X0, dtype=np.float64))
        if X0.shape[1] != self.X.shape[1]:
            raise ValueError(f"trend vector has {X0.shape[1]} columns, model expects {self.X.shape[1]}")
        nbr = self._target_neighbors(tlon, tlat, thour)
        try:
            adj, var = accel.conditional_predict(
                self.graph.lon, self.graph.lat, self.graph.hour, self._resid_ordered,
                tlon, tlat, thour, nbr,
                self.params.sill, self.params.rho_s, self.params.rho_t, self.params.nugget,
                metric_code(self.metric),
            )
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"singular neighbor covariance in prediction: {exc}") from exc
        mean = X0 @ self.beta + adj
        var, clamped = clamp_variances(var)
        self.n_var_clamped += clamped
        return mean, var

    def predict_point(self, target, x0) -> tuple[float, float]:
        mean, var = self.predict([target], np.asarray(x0, dtype=np.float64)[None, :])
        return float(mean[0]), float(var[0])

    def factor_nonzeros(self) -> int:
        return int((self.graph.nbr >= 0).sum() + self.graph.n)

    def to_dict(self) -> dict:
        lon, lat, hour = self.graph.lon, self.graph.lat, self.graph.hour
        inv = np.argsort(self.graph.ordering)
        return {
            "format": "geoblend-model",
            "version": 1,
            "kind": self.kind,
            "metric": self.metric,
            "m": self.m,
            "params": self.params.to_dict(),
            "beta": self.beta.tolist(),
            "lon": lon[inv].tolist(),
            "lat": lat[inv].tolist(),
            "hour": hour[inv].tolist(),
            "X": self.X.tolist(),
            "Y": self.Y.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NngpModel":
        points = (np.array(d["lon"]), np.array(d["lat"]), np.array(d["hour"]))
        return cls(points, np.array(d["X"]), np.array(d["Y"]), CovarianceParams.from_dict(d["params"]),
                   m=d["m"], metric=d["metric"])


def fit(
    points,
    X,
    Y,
    m: int = DEFAULT_M,
    init: CovarianceParams | None = None,
    metric: str = "haversine",
    n_starts: int = 3,
    seed: int = 0,
    maxiter: int = 200,
) -> NngpModel:
    """Maximize the Vecchia likelihood over covariance parameters and trend."""
    lon, lat, hour = as_point_arrays(points)
    X = np.ascontiguousarray(X, dtype=np.float64)
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    n, p = X.shape
    if n < p + 2:
        raise ValueError(f"need at least p + 2 = {p + 2} rows, got {n}")
    if np.linalg.matrix_rank(X) < p:
        raise NumericalError("trend design matrix is rank deficient")
    if init is None:
        init = CovarianceParams(sigma_s=float(np.std(Y)) or 1.0, rho_s=50.0, rho_t=5.0, nugget=0.1 * float(np.var(Y) or 1.0))

    graph = build_neighbors((lon, lat, hour), m, metric)

    def neg_ll(x):
        params = _params_from_log(x)
        try:
            coef, cond_var = _factor(graph, params)
        except NumericalError:
            return 1e12
        ex = _whiten(X, graph, coef, cond_var)
        ey = _whiten(Y, graph, coef, cond_var)
        beta, *_ = np.linalg.lstsq(ex, ey, rcond=None)
        e = ey - ex @ beta
        ll = -0.5 * (n * np.log(2.0 * np.pi) + np.sum(np.log(cond_var)) + e @ e)
        return -ll if np.isfinite(ll) else 1e12

    opt = multi_start_maximize(neg_ll, _log_from_params(init), _LOG_BOUNDS, n_starts=n_starts, seed=seed, maxiter=maxiter)
    return NngpModel((lon, lat, hour), X, Y, _params_from_log(opt.x), graph=graph, opt=opt)


def predict(model: NngpModel, target, x0) -> tuple[float, float]:
    """Point prediction (mean, variance) at one target site."""
    return model.predict_point(target, x0)
