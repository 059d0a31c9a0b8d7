"""Fixed-rank kriging with bisquare tensor-product bases.

The spatiotemporal random effect is a linear combination of K = Ks x Kt
basis functions: spatial bisquares on nested cell-centered grids (two
resolutions by default) times temporal bisquares on a regular 1-D grid.
Coefficients are Gaussian with an exponential covariance over the spatial
basis centers; temporal centers are independent (the temporal factor is the
rho_t -> 0 limit), so the coefficient covariance is block-diagonal with one
identical spatial kernel per temporal slice. Every marginal-likelihood and
prediction solve reduces to K x K factorizations via the Woodbury identity.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from . import accel
from ._linalg import OptResult, chol_factor, clamp_variances, multi_start_maximize
from .covariance import as_point_arrays, metric_code
from .errors import NumericalError

DEFAULT_SPATIAL_SPLIT = (16, 64)
DEFAULT_N_TEMPORAL = 20

_LOG_BOUNDS = [(-7.0, 7.0), (-5.0, 14.0), (-21.0, 7.0)]


def bisquare(u):
    """Compactly supported radial weight: (1 - u^2)^2 for u <= 1, else 0."""
    u = np.asarray(u, dtype=np.float64)
    w = np.where(u <= 1.0, (1.0 - u * u) ** 2, 0.0)
    return float(w) if w.ndim == 0 else w


@dataclass(frozen=True)
class FrkParams:
    """Coefficient-covariance sill/range plus measurement-error variance."""

    sigma_s: float
    rho_s: float
    nugget: float

    def __post_init__(self):
        if not (self.sigma_s > 0 and self.rho_s > 0 and self.nugget > 0):
            raise ValueError("sigma_s, rho_s and nugget must be strictly positive")

    def to_dict(self) -> dict:
        return {"sigma_s": self.sigma_s, "rho_s": self.rho_s, "nugget": self.nugget}

    @classmethod
    def from_dict(cls, d: dict) -> "FrkParams":
        return cls(**d)


@dataclass
class BasisSet:
    """Tensor-product basis: spatial centers x temporal centers.

    Spatial bisquares are radial in planar degree coordinates with one
    aperture per resolution (1.5x the grid spacing); temporal bisquares live
    on the hour axis. Tensor index u = q * Ks + p pairs temporal center q
    with spatial center p.
    """

    sp_centers: np.ndarray  # (Ks, 2) lon/lat
    sp_aperture: np.ndarray  # (Ks,)
    sp_resolution: np.ndarray  # (Ks,) int level
    t_centers: np.ndarray  # (Kt,)
    t_aperture: np.ndarray  # (Kt,)

    @property
    def k_spatial(self) -> int:
        return self.sp_centers.shape[0]

    @property
    def k_temporal(self) -> int:
        return self.t_centers.shape[0]

    @property
    def k_total(self) -> int:
        return self.k_spatial * self.k_temporal

    def eval_spatial(self, lon, lat) -> np.ndarray:
        d = np.hypot(lon[:, None] - self.sp_centers[None, :, 0], lat[:, None] - self.sp_centers[None, :, 1])
        return bisquare(d / self.sp_aperture[None, :])

    def eval_temporal(self, hour) -> np.ndarray:
        return bisquare(np.abs(hour[:, None] - self.t_centers[None, :]) / self.t_aperture[None, :])

    def design(self, lon, lat, hour) -> np.ndarray:
        """Evaluate all K tensor bases at the given points: (n, K)."""
        phi_s = self.eval_spatial(lon, lat)
        psi_t = self.eval_temporal(hour)
        n = lon.shape[0]
        return np.einsum("nq,np->nqp", psi_t, phi_s).reshape(n, self.k_total)

    def coefficient_cov(self, sigma_s: float, rho_s: float, metric: str = "haversine") -> np.ndarray:
        """K x K coefficient covariance: I_Kt kron (sigma_s^2 exp(-d/rho_s))."""
        clon = np.ascontiguousarray(self.sp_centers[:, 0])
        clat = np.ascontiguousarray(self.sp_centers[:, 1])
        d = accel.pairwise_distance(clon, clat, metric_code(metric))
        block = sigma_s**2 * np.exp(-d / rho_s)
        return np.kron(np.eye(self.k_temporal), block)

    def to_dict(self) -> dict:
        return {
            "sp_centers": self.sp_centers.tolist(),
            "sp_aperture": self.sp_aperture.tolist(),
            "sp_resolution": self.sp_resolution.tolist(),
            "t_centers": self.t_centers.tolist(),
            "t_aperture": self.t_aperture.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BasisSet":
        return cls(
            sp_centers=np.array(d["sp_centers"], dtype=np.float64).reshape(-1, 2),
            sp_aperture=np.array(d["sp_aperture"], dtype=np.float64),
            sp_resolution=np.array(d["sp_resolution"], dtype=np.int64),
            t_centers=np.array(d["t_centers"], dtype=np.float64),
            t_aperture=np.array(d["t_aperture"], dtype=np.float64),
        )


def _grid_shape(spec) -> tuple[int, int]:
    """A resolution entry is either a perfect-square count or an (nx, ny) pair."""
    if isinstance(spec, (tuple, list)):
        nx, ny = int(spec[0]), int(spec[1])
    else:
        g = int(round(np.sqrt(spec)))
        if g * g != spec:
            raise ValueError(f"spatial basis count {spec} is not a perfect square; pass an (nx, ny) pair instead")
        nx = ny = g
    if nx < 1 or ny < 1:
        raise ValueError("spatial grid shape must be positive")
    return nx, ny


def build_basis(
    bounds,
    spatial_split=DEFAULT_SPATIAL_SPLIT,
    n_temporal: int = DEFAULT_N_TEMPORAL,
    aperture_factor: float = 1.5,
) -> BasisSet:
    """Lay out cell-centered basis grids over the data bounds.

    ``bounds`` is (lon_min, lon_max, lat_min, lat_max, hour_min, hour_max).
    Each spatial resolution contributes a g x g cell-centered grid (counts
    must be perfect squares; defaults 16 + 64 = 80 centers); temporal centers
    form a regular 1-D grid. Apertures are ``aperture_factor`` times the grid
    spacing, so every in-bounds point activates at least one basis at every
    resolution. Defaults give K = 80 * 20 = 1600 tensor functions.
    """
    lon_min, lon_max, lat_min, lat_max, hour_min, hour_max = (float(b) for b in bounds)
    if not (lon_max > lon_min and lat_max > lat_min):
        raise ValueError("degenerate spatial bounds")
    if hour_max < hour_min:
        raise ValueError("degenerate temporal bounds")

    centers, apertures, levels = [], [], []
    for level, spec in enumerate(spatial_split):
        nx, ny = _grid_shape(spec)
        sp_lon = (lon_max - lon_min) / nx
        sp_lat = (lat_max - lat_min) / ny
        cx = lon_min + (np.arange(nx) + 0.5) * sp_lon
        cy = lat_min + (np.arange(ny) + 0.5) * sp_lat
        gx, gy = np.meshgrid(cx, cy, indexing="ij")
        centers.append(np.column_stack([gx.ravel(), gy.ravel()]))
        apertures.append(np.full(nx * ny, aperture_factor * max(sp_lon, sp_lat)))
        levels.append(np.full(nx * ny, level, dtype=np.int64))

    t_span = hour_max - hour_min
    spacing = t_span / n_temporal if t_span > 0 else 1.0
    t_centers = hour_min + (np.arange(n_temporal) + 0.5) * (t_span / n_temporal) if t_span > 0 else np.full(n_temporal, hour_min)
    return BasisSet(
        sp_centers=np.vstack(centers),
        sp_aperture=np.concatenate(apertures),
        sp_resolution=np.concatenate(levels),
        t_centers=np.asarray(t_centers, dtype=np.float64),
        t_aperture=np.full(n_temporal, aperture_factor * spacing),
    )


def bounds_of(points, pad: float = 1e-9):
    lon, lat, hour = as_point_arrays(points)
    return (
        lon.min() - pad, lon.max() + pad,
        lat.min() - pad, lat.max() + pad,
        hour.min(), hour.max(),
    )


class FrkModel:
    """Fitted low-rank predictor; all cached solves are K x K."""

    kind = "frk"

    def __init__(self, points, X, Y, basis: BasisSet, params: FrkParams,
                 metric: str = "haversine", opt: OptResult | None = None):
        lon, lat, hour = as_point_arrays(points)
        X = np.ascontiguousarray(X, dtype=np.float64)
        Y = np.ascontiguousarray(Y, dtype=np.float64)
        n, p = X.shape
        if Y.shape[0] != n or lon.shape[0] != n:
            raise ValueError("points, X and Y must agree in length")
        self.lon, self.lat, self.hour = lon, lat, hour
        self.X, self.Y = X, Y
        self.basis = basis
        self.params = params
        self.metric = metric
        self.opt = opt
        self.n_var_clamped = 0

        phi = basis.design(lon, lat, hour)
        if n and not np.all(phi.any(axis=1)):
            warnings.warn("some observations activate no basis function (outside basis bounds)", RuntimeWarning)
        self._phi = phi
        self._gram_phi = phi.T @ phi
        S = basis.coefficient_cov(params.sigma_s, params.rho_s, metric)
        self._S = S
        v = params.nugget
        s_factor = chol_factor(S)
        a = sla.cho_solve(s_factor, np.eye(S.shape[0])) + self._gram_phi / v
        self._a_factor = chol_factor(a)

        # GLS trend via Woodbury applications of Sigma_y^{-1}
        si_x = self._sigma_inv(X)
        si_y = self._sigma_inv(Y)
        gram = X.T @ si_x
        self.beta = sla.solve(gram, X.T @ si_y, assume_a="pos")
        self._gram = gram
        resid = Y - X @ self.beta
        self._si_resid = self._sigma_inv(resid)
        self._resid = resid
        # prediction shortcut: mean adj = phi0 . S Phi' Sigma^{-1} resid
        self._u_mean = S @ (phi.T @ self._si_resid)

    def _sigma_inv(self, mat):
        """Apply Sigma_y^{-1} = I/v - Phi A^{-1} Phi' / v^2 to a vector/matrix."""
        v = self.params.nugget
        pm = self._phi.T @ mat
        return mat / v - self._phi @ sla.cho_solve(self._a_factor, pm) / v**2

    @property
    def n_train(self) -> int:
        return self.Y.shape[0]

    def loglik(self) -> float:
        n = self.n_train
        v = self.params.nugget
        s_logdet = 2.0 * float(np.sum(np.log(np.diag(chol_factor(self._S)[0]))))
        a_logdet = 2.0 * float(np.sum(np.log(np.diag(self._a_factor[0]))))
        logdet = a_logdet + s_logdet + n * np.log(v)
        quad = float(self._resid @ self._si_resid)
        return -0.5 * (n * np.log(2.0 * np.pi) + logdet + quad)

    def predict(self, targets, X0) -> tuple[np.ndarray, np.ndarray]:
        """Low-rank prediction: mean per the kriging form, variance per
        phi0' S phi0 + nugget - c' Sigma^{-1} c, all via K x K solves."""
        tlon, tlat, thour = as_point_arrays(targets)
        X0 = np.atleast_2d(np.asarray(X0, dtype=np.float64))
        if X0.shape[1] != self.X.shape[1]:
            raise ValueError(f"trend vector has {X0.shape[1]} columns, model expects {self.X.shape[1]}")
        v = self.params.nugget
        phi0 = self.basis.design(tlon, tlat, thour)
        mean = X0 @ self.beta + phi0 @ self._u_mean

        b0 = self._S @ phi0.T  # (K, q)
        h = self._gram_phi @ b0
        cc = np.einsum("kq,kq->q", b0, h)
        core = np.einsum("kq,kq->q", h, sla.cho_solve(self._a_factor, h))
        quad = cc / v - core / v**2
        prior = np.einsum("qk,kq->q", phi0, b0)
        var, clamped = clamp_variances(prior + v - quad)
        self.n_var_clamped += clamped
        return mean, var

    def predict_point(self, target, x0) -> tuple[float, float]:
        mean, var = self.predict([target], np.asarray(x0, dtype=np.float64)[None, :])
        return float(mean[0]), float(var[0])

    def coefficient_posterior_mean(self) -> np.ndarray:
        """E[w* | Y] = A^{-1} Phi' r / nugget (== S Phi' Sigma_y^{-1} r)."""
        return sla.cho_solve(self._a_factor, self._phi.T @ self._resid) / self.params.nugget

    def dense_cov(self) -> np.ndarray:
        """Explicit n x n covariance Phi S Phi' + nugget I (test oracle aid)."""
        return self._phi @ self._S @ self._phi.T + self.params.nugget * np.eye(self.n_train)

    def to_dict(self) -> dict:
        return {
            "format": "geoblend-model",
            "version": 1,
            "kind": self.kind,
            "metric": self.metric,
            "params": self.params.to_dict(),
            "basis": self.basis.to_dict(),
            "beta": self.beta.tolist(),
            "lon": self.lon.tolist(),
            "lat": self.lat.tolist(),
            "hour": self.hour.tolist(),
            "X": self.X.tolist(),
            "Y": self.Y.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FrkModel":
        points = (np.array(d["lon"]), np.array(d["lat"]), np.array(d["hour"]))
        return cls(points, np.array(d["X"]), np.array(d["Y"]), BasisSet.from_dict(d["basis"]),
                   FrkParams.from_dict(d["params"]), d["metric"])


def fit(
    points,
    X,
    Y,
    basis: BasisSet,
    init: FrkParams | None = None,
    metric: str = "haversine",
    n_starts: int = 3,
    seed: int = 0,
    maxiter: int = 150,
) -> FrkModel:
    """Direct marginal-likelihood estimation of (sigma_s, rho_s, nugget)."""
    lon, lat, hour = as_point_arrays(points)
    X = np.ascontiguousarray(X, dtype=np.float64)
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    n, p = X.shape
    if n <= basis.k_total:
        warnings.warn(f"n={n} <= K={basis.k_total}: low-rank fit is weakly constrained", RuntimeWarning)
    if np.linalg.matrix_rank(X) < p:
        raise NumericalError("trend design matrix is rank deficient")
    if init is None:
        vy = float(np.var(Y)) or 1.0
        init = FrkParams(sigma_s=np.sqrt(vy), rho_s=50.0, nugget=0.1 * vy)

    phi = basis.design(lon, lat, hour)
    gram_phi = phi.T @ phi
    eye_k = np.eye(basis.k_total)

    def neg_ll(x):
        sigma_s, rho_s, v = np.exp(x)
        try:
            clon = np.ascontiguousarray(basis.sp_centers[:, 0])
            clat = np.ascontiguousarray(basis.sp_centers[:, 1])
            d = accel.pairwise_distance(clon, clat, metric_code(metric))
            block = sigma_s**2 * np.exp(-d / rho_s)
            S = np.kron(np.eye(basis.k_temporal), block)
            s_factor = chol_factor(S)
            a = sla.cho_solve(s_factor, eye_k) + gram_phi / v
            a_factor = chol_factor(a)

            def sigma_inv(mat):
                return mat / v - phi @ sla.cho_solve(a_factor, phi.T @ mat) / v**2

            si_x = sigma_inv(X)
            si_y = sigma_inv(Y)
            beta = sla.solve(X.T @ si_x, X.T @ si_y, assume_a="pos")
            resid = Y - X @ beta
            quad = float(resid @ sigma_inv(resid))
            logdet = (
                2.0 * float(np.sum(np.log(np.diag(a_factor[0]))))
                + 2.0 * float(np.sum(np.log(np.diag(s_factor[0]))))
                + n * np.log(v)
            )
            ll = -0.5 * (n * np.log(2.0 * np.pi) + logdet + quad)
        except NumericalError:
            return 1e12
        return -ll if np.isfinite(ll) else 1e12

    x0 = np.log([init.sigma_s, init.rho_s, init.nugget])
    opt = multi_start_maximize(neg_ll, x0, _LOG_BOUNDS, n_starts=n_starts, seed=seed, maxiter=maxiter)
    sigma_s, rho_s, v = np.exp(opt.x)
    return FrkModel((lon, lat, hour), X, Y, basis, FrkParams(sigma_s, rho_s, v), metric, opt=opt)


def predict(model: FrkModel, target, x0) -> tuple[float, float]:
    """Point prediction (mean, variance) at one target site."""
    return model.predict_point(target, x0)
