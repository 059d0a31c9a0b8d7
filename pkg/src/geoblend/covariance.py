"""Separable exponential space-time covariance model.

The covariance between observations at lag ``h`` in space and ``tau`` in
time is ``sigma_s^2 exp(-||h||/rho_s) * sigma_t^2 exp(-|tau|/rho_t)``, with a
nugget (measurement-error variance) added on the diagonal of assembled
matrices. Spatial distance defaults to great-circle kilometers; a planar
euclidean metric over raw coordinates is available for test oracles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import accel
from .errors import NumericalError

METRICS = {"haversine": accel.METRIC_HAVERSINE, "euclidean": accel.METRIC_EUCLIDEAN}

EARTH_RADIUS_KM = 6371.0


@dataclass(frozen=True)
class SpaceTimePoint:
    """A single observation site: longitude, latitude (degrees) and hour index."""

    lon: float
    lat: float
    hour: float

    def __post_init__(self):
        if not (np.isfinite(self.lon) and np.isfinite(self.lat) and np.isfinite(self.hour)):
            raise ValueError("space-time point coordinates must be finite")


@dataclass(frozen=True)
class CovarianceParams:
    """Parameters of the separable exponential covariance plus nugget.

    ``sigma_s``/``sigma_t`` are the spatial and temporal standard deviations
    (their squared product is the sill), ``rho_s``/``rho_t`` the spatial and
    temporal ranges, and ``nugget`` the measurement-error variance. During
    estimation ``sigma_t`` is pinned at 1 so ``sigma_s`` carries the joint
    sill (the two multiply and are not separately identifiable).
    """

    sigma_s: float
    rho_s: float
    rho_t: float
    sigma_t: float = 1.0
    nugget: float = 0.0

    def __post_init__(self):
        for name in ("sigma_s", "sigma_t", "rho_s", "rho_t"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.nugget < 0:
            raise ValueError("nugget must be >= 0")

    @property
    def sill(self) -> float:
        return self.sigma_s**2 * self.sigma_t**2

    def to_dict(self) -> dict:
        return {
            "sigma_s": self.sigma_s,
            "sigma_t": self.sigma_t,
            "rho_s": self.rho_s,
            "rho_t": self.rho_t,
            "nugget": self.nugget,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CovarianceParams":
        return cls(**d)


def metric_code(metric: str) -> int:
    try:
        return METRICS[metric]
    except KeyError:
        raise ValueError(f"unknown distance metric {metric!r}; choose from {sorted(METRICS)}") from None


def as_point_arrays(points) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Normalize a point collection into (lon, lat, hour) float64 arrays.

    Accepts a sequence of SpaceTimePoint, an (n, 3) array, or a 3-tuple of
    arrays.
    """
    if isinstance(points, tuple) and len(points) == 3:
        lon, lat, hour = (np.ascontiguousarray(p, dtype=np.float64) for p in points)
    else:
        seq = list(points)
        if seq and isinstance(seq[0], SpaceTimePoint):
            arr = np.array([(p.lon, p.lat, p.hour) for p in seq], dtype=np.float64)
        else:
            arr = np.asarray(seq, dtype=np.float64).reshape(-1, 3)
        lon, lat, hour = (np.ascontiguousarray(arr[:, k]) for k in range(3))
    if lon.shape != lat.shape or lon.shape != hour.shape:
        raise ValueError("lon/lat/hour arrays must have equal length")
    return lon, lat, hour


def haversine_km(lon1, lat1, lon2, lat2):
    """Great-circle distance in kilometers (Earth radius 6371.0 km)."""
    rlat1, rlat2 = np.radians(lat1), np.radians(lat2)
    sdlat = np.sin(0.5 * (rlat2 - rlat1))
    sdlon = np.sin(0.5 * np.radians(np.asarray(lon2) - np.asarray(lon1)))
    h = sdlat**2 + np.cos(rlat1) * np.cos(rlat2) * sdlon**2
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def spatial_distance(a: SpaceTimePoint, b: SpaceTimePoint, metric: str = "haversine") -> float:
    """Spatial separation of two points under the chosen metric."""
    if metric_code(metric) == accel.METRIC_EUCLIDEAN:
        return float(np.hypot(a.lon - b.lon, a.lat - b.lat))
    return float(haversine_km(a.lon, a.lat, b.lon, b.lat))


def cov(
    a: SpaceTimePoint,
    b: SpaceTimePoint,
    params: CovarianceParams,
    metric: str = "haversine",
    same_index: bool = False,
) -> float:
    """Covariance between two observations.

    The nugget only enters when ``same_index`` is set, i.e. when a and b are
    the identical indexed observation rather than two observations that
    happen to share coordinates.
    """
    h = spatial_distance(a, b, metric)
    tau = abs(a.hour - b.hour)
    value = params.sill * np.exp(-h / params.rho_s - tau / params.rho_t)
    if same_index:
        value += params.nugget
    return float(value)


def cov_matrix(points, params: CovarianceParams, metric: str = "haversine") -> np.ndarray:
    """Covariance matrix of a point set, nugget on the diagonal.

    Symmetric and positive-definite (strictly, when nugget > 0 or all points
    are distinct).
    """
    lon, lat, hour = as_point_arrays(points)
    if lon.size < 1:
        raise ValueError("need at least one point")
    out = accel.cov_matrix(lon, lat, hour, params.sill, params.rho_s, params.rho_t, params.nugget, metric_code(metric))
    if not np.all(np.isfinite(out)):
        raise NumericalError("covariance matrix contains non-finite entries")
    return out


def cross_cov_matrix(points_a, points_b, params: CovarianceParams, metric: str = "haversine") -> np.ndarray:
    """Cross-covariance between two point sets (no nugget: distinct observations)."""
    lon1, lat1, h1 = as_point_arrays(points_a)
    lon2, lat2, h2 = as_point_arrays(points_b)
    return accel.cross_cov(lon1, lat1, h1, lon2, lat2, h2, params.sill, params.rho_s, params.rho_t, metric_code(metric))
