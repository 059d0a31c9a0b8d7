"""Gridded hourly prediction maps.

A GridSpec lays an nx-by-ny node grid over a lon/lat rectangle (California
by default) and names the hours to predict. The engine fits the requested
model on the full observation table once, then emits one tidy CSV row per
grid node and hour: lon, lat, hour, predicted_log_pm25, variance (empty
where the model provides none). Cells outside an optional polygon mask, or
ML rows excluded for lack of lagged neighbors, keep their position in the
raster with empty prediction fields.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from . import frk as frk_mod
from . import kriging as uk_mod
from . import nngp as nngp_mod
from .covariance import CovarianceParams
from .dataset import ObservationTable, trend_matrix
from .errors import DataError, UsageError
from .evaluate import GEO_MODELS, ML_MODELS, BenchmarkConfig
from .features import FeatureGroupSpec, build_feature_matrix
from .ml import fit_enn, fit_forest, fit_regression, fit_svr

CA_BOUNDS = (-124.48, -114.13, 32.53, 42.01)
DEFAULT_NX = 50
DEFAULT_NY = 50
GRID_COLUMNS = ["lon", "lat", "hour", "predicted_log_pm25", "variance"]


@dataclass
class GridSpec:
    bounds: tuple = CA_BOUNDS  # lon_min, lon_max, lat_min, lat_max
    nx: int = DEFAULT_NX
    ny: int = DEFAULT_NY
    hours: tuple = ()
    mask: list | None = None  # list of polygon rings [[lon, lat], ...]

    def __post_init__(self):
        lon_min, lon_max, lat_min, lat_max = self.bounds
        if self.nx < 2 or self.ny < 2:
            raise UsageError("grid needs nx >= 2 and ny >= 2")
        if not (lon_max > lon_min and lat_max > lat_min):
            raise UsageError("degenerate grid bounds")

    def nodes(self) -> tuple[np.ndarray, np.ndarray]:
        """Grid node coordinates, lat-major then lon (row by row)."""
        lon_min, lon_max, lat_min, lat_max = self.bounds
        lons = np.linspace(lon_min, lon_max, self.nx)
        lats = np.linspace(lat_min, lat_max, self.ny)
        gl, gt = np.meshgrid(lons, lats, indexing="xy")
        return gl.ravel(), gt.ravel()

    def inside_mask(self, lon: np.ndarray, lat: np.ndarray) -> np.ndarray:
        if self.mask is None:
            return np.ones(lon.shape[0], dtype=bool)
        inside = np.zeros(lon.shape[0], dtype=bool)
        for ring in self.mask:
            inside |= points_in_ring(lon, lat, np.asarray(ring, dtype=np.float64))
        return inside


def points_in_ring(lon, lat, ring: np.ndarray) -> np.ndarray:
    """Ray-casting point-in-polygon test for one closed ring."""
    if ring.ndim != 2 or ring.shape[1] != 2 or ring.shape[0] < 3:
        raise DataError("polygon ring must be an (n, 2) list of [lon, lat] with n >= 3")
    x, y = lon, lat
    inside = np.zeros(x.shape[0], dtype=bool)
    x1, y1 = ring[-1]
    for x2, y2 in ring:
        crosses = ((y1 > y) != (y2 > y)) & (x < (x2 - x1) * (y - y1) / (y2 - y1 + 1e-300) + x1)
        inside ^= crosses
        x1, y1 = x2, y2
    return inside


def load_mask(path) -> list:
    """Mask file: a JSON ring [[lon, lat], ...] or a list of such rings."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read mask file {path}: {exc}") from exc
    if not isinstance(doc, list) or not doc:
        raise DataError("mask must be a JSON ring or list of rings")
    if isinstance(doc[0][0], (int, float)):
        doc = [doc]
    return doc


def default_hours(table: ObservationTable, window: int = 24) -> tuple:
    """The most recent ``window`` hour indices present in the data."""
    hours = np.unique(table.hour)
    return tuple(int(h) for h in hours[-window:])


def _fit_full(table: ObservationTable, model_key: str, group: int, config: BenchmarkConfig):
    """Fit the model on the complete table; returns a predict closure."""
    if model_key in GEO_MODELS:
        if group != 1:
            raise UsageError(f"geostatistical model {model_key!r} runs in group 1 only")
        X = table.trend_matrix(config.trend)
        init = config.geo_init or CovarianceParams(
            sigma_s=float(np.std(table.log_pm25)) or 1.0, rho_s=50.0, rho_t=5.0,
            nugget=0.1 * (float(np.var(table.log_pm25)) or 1.0),
        )
        if model_key == "uk":
            model = uk_mod.fit_mle(table.points(), X, table.log_pm25, init, metric=config.metric,
                                   n_starts=config.n_starts, seed=config.seed, n_max=config.uk_n_max)
        elif model_key == "nngp":
            model = nngp_mod.fit(table.points(), X, table.log_pm25, m=config.m_neighbors, init=init,
                                 metric=config.metric, n_starts=config.n_starts, seed=config.seed)
        else:
            basis = frk_mod.build_basis(frk_mod.bounds_of(table.points()),
                                        spatial_split=config.frk_spatial_split,
                                        n_temporal=config.frk_n_temporal)
            model = frk_mod.fit(table.points(), X, table.log_pm25, basis, metric=config.metric,
                                n_starts=config.n_starts, seed=config.seed)

        def predict(points):
            X0 = trend_matrix(points[0], points[1], points[2], config.trend)
            mean, var = model.predict(points, X0)
            return mean, var, np.arange(points[0].shape[0])

        return model, predict

    if model_key not in ML_MODELS:
        raise UsageError(f"unknown model key {model_key!r}")
    nngp_source = None
    if group == 4:
        init = config.geo_init or CovarianceParams(
            sigma_s=float(np.std(table.log_pm25)) or 1.0, rho_s=50.0, rho_t=5.0,
            nugget=0.1 * (float(np.var(table.log_pm25)) or 1.0),
        )
        nngp_source = nngp_mod.fit(table.points(), table.trend_matrix(config.trend), table.log_pm25,
                                   m=config.m_neighbors, init=init, metric=config.metric,
                                   n_starts=config.n_starts, seed=config.seed)
    spec = FeatureGroupSpec(group=group, k_nno=config.k_nno, nno_lag=config.nno_lag,
                            kriging_source=nngp_source, nngp_trend=config.trend,
                            with_hour=config.with_hour, metric=config.metric)
    fm = build_feature_matrix(spec, table.points(), table, exclude_sensor_ids=table.sensor_id)
    y = table.log_pm25[fm.kept_idx]
    if model_key == "reg":
        model = fit_regression(fm.X, y)
    elif model_key == "rf":
        model = fit_forest(fm.X, y, config.rf)
    elif model_key == "svr":
        model = fit_svr(fm.X, y, config.svr)
    else:
        model = fit_enn(fm.X, y, config.enn)

    def predict(points):
        fmq = build_feature_matrix(spec, points, table)
        mean = model.predict(fmq.X) if fmq.X.shape[0] else np.array([])
        if model_key == "reg" and fmq.X.shape[0]:
            var = model.predict_variance(fmq.X)
        else:
            var = np.full(mean.shape[0], np.nan)
        return mean, var, fmq.kept_idx

    return model, predict


def predict_grid(table: ObservationTable, model_key: str, group: int, spec: GridSpec,
                 config: BenchmarkConfig | None = None) -> pd.DataFrame:
    """Raster rows for every grid node and requested hour."""
    config = config or BenchmarkConfig()
    hours = spec.hours or default_hours(table)
    data_hours = set(int(h) for h in np.unique(table.hour))
    for h in hours:
        if int(h) not in data_hours:
            raise DataError(f"requested hour {h} is outside the data range")

    _, predict = _fit_full(table, model_key, group, config)
    g_lon, g_lat = spec.nodes()
    unmasked = spec.inside_mask(g_lon, g_lat)
    n = g_lon.shape[0]

    frames = []
    for h in hours:
        mean_col = np.full(n, np.nan)
        var_col = np.full(n, np.nan)
        idx = np.nonzero(unmasked)[0]
        if idx.size:
            pts = (g_lon[idx], g_lat[idx], np.full(idx.size, float(h)))
            mean, var, kept = predict(pts)
            mean_col[idx[kept]] = mean
            var_col[idx[kept]] = var
        frames.append(pd.DataFrame({
            "lon": g_lon, "lat": g_lat, "hour": np.full(n, int(h)),
            "predicted_log_pm25": mean_col, "variance": var_col,
        }))
    return pd.concat(frames, ignore_index=True)[GRID_COLUMNS]
