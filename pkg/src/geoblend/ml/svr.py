"""Epsilon-insensitive support-vector regression with a radial kernel.

Kernel: K(x, y) = exp(-sum_d (x_d - y_d)^2 / gamma). The dual quadratic
program (variables alpha_star/alpha in [0, lambda] with equal sums) is
solved by pairwise working-set ascent (SMO with maximal-violating-pair
selection); the stored signed weight per training point is
alpha_star_i - alpha_i, so predictions are sum_i w_i K(v_i, x) + bias and
track the response. Features are standardized with training statistics by
default; kernels are scale-sensitive.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .. import accel
from ..errors import NumericalError

# documented hyperparameter grids for cross-validated tuning
GAMMA_GRID_FACTORS = (0.1, 1.0, 10.0)
EPSILON_GRID = (0.01, 0.05, 0.1)
LAMBDA_GRID = (1.0, 10.0, 100.0)


@dataclass
class SvrConfig:
    gamma: float | None = None  # None: median heuristic at fit time
    epsilon: float = 0.05
    lam: float = 10.0
    tol: float = 1e-3
    max_iter: int = 2_000_000
    standardize: bool = True

    def __post_init__(self):
        if self.gamma is not None and not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if not self.lam > 0:
            raise ValueError("lambda must be positive")


def rbf_kernel(A, B, gamma: float) -> np.ndarray:
    """exp(-||a - b||^2 / gamma) for all pairs, via the Gram expansion."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    sq = (A * A).sum(axis=1)[:, None] + (B * B).sum(axis=1)[None, :] - 2.0 * (A @ B.T)
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-sq / gamma)


def median_heuristic_gamma(X, max_points: int = 500, seed: int = 0) -> float:
    """Median pairwise squared distance; the customary default kernel scale."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n = X.shape[0]
    if n > max_points:
        keep = np.sort(np.random.default_rng(seed).choice(n, size=max_points, replace=False))
        X = X[keep]
    sq = (X * X).sum(axis=1)[:, None] + (X * X).sum(axis=1)[None, :] - 2.0 * (X @ X.T)
    upper = sq[np.triu_indices(X.shape[0], k=1)]
    med = float(np.median(upper[upper > 0])) if np.any(upper > 0) else 1.0
    return max(med, 1e-12)


class SvrModel:
    kind = "svr"

    def __init__(self, train_X, alpha_star, alpha, bias, gamma, config: SvrConfig,
                 x_mean, x_scale, n_iter: int, kkt_gap: float):
        self.train_X = train_X  # standardized training features
        self.alpha_star = alpha_star
        self.alpha = alpha
        self.bias = bias
        self.gamma = gamma
        self.config = config
        self.x_mean = x_mean
        self.x_scale = x_scale
        self.n_iter = n_iter
        self.kkt_gap = kkt_gap
        self.dual_coef = alpha_star - alpha  # signed weight per training point
        sv = np.abs(self.dual_coef) > 0
        self.support_vectors = train_X[sv]
        self._sv_coef = self.dual_coef[sv]

    @property
    def n_support(self) -> int:
        return self.support_vectors.shape[0]

    def _standardize(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return (X - self.x_mean) / self.x_scale

    def predict(self, X) -> np.ndarray:
        Xs = self._standardize(X)
        if Xs.shape[1] != self.train_X.shape[1]:
            raise ValueError(f"feature arity {Xs.shape[1]} does not match training arity {self.train_X.shape[1]}")
        if self.n_support == 0:
            return np.full(Xs.shape[0], self.bias)
        return rbf_kernel(Xs, self.support_vectors, self.gamma) @ self._sv_coef + self.bias

    def to_dict(self) -> dict:
        return {
            "format": "geoblend-model",
            "version": 1,
            "kind": self.kind,
            "train_X": self.train_X.tolist(),
            "alpha_star": self.alpha_star.tolist(),
            "alpha": self.alpha.tolist(),
            "bias": self.bias,
            "gamma": self.gamma,
            "config": {
                "gamma": self.config.gamma,
                "epsilon": self.config.epsilon,
                "lam": self.config.lam,
                "tol": self.config.tol,
                "max_iter": self.config.max_iter,
                "standardize": self.config.standardize,
            },
            "x_mean": self.x_mean.tolist(),
            "x_scale": self.x_scale.tolist(),
            "n_iter": self.n_iter,
            "kkt_gap": self.kkt_gap,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SvrModel":
        return cls(
            np.array(d["train_X"]), np.array(d["alpha_star"]), np.array(d["alpha"]),
            float(d["bias"]), float(d["gamma"]), SvrConfig(**d["config"]),
            np.array(d["x_mean"]), np.array(d["x_scale"]), int(d["n_iter"]), float(d["kkt_gap"]),
        )


def dual_objective(D, y, epsilon, alpha_star, alpha) -> float:
    """Value of the minimized dual QP at (alpha_star, alpha)."""
    g = alpha_star - alpha
    return float(0.5 * g @ D @ g + (epsilon - y) @ alpha_star + (epsilon + y) @ alpha)


def fit_svr(X, Y, config: SvrConfig | None = None) -> SvrModel:
    """Solve the dual QP by SMO; warns (not raises) if the KKT gap misses tol."""
    config = config or SvrConfig()
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    n = X.shape[0]
    if n < 2:
        raise ValueError("need at least 2 rows")

    if config.standardize:
        x_mean = X.mean(axis=0)
        x_scale = X.std(axis=0)
        x_scale[x_scale < 1e-12] = 1.0
    else:
        x_mean = np.zeros(X.shape[1])
        x_scale = np.ones(X.shape[1])
    Xs = (X - x_mean) / x_scale

    gamma = config.gamma if config.gamma is not None else median_heuristic_gamma(Xs)
    D = rbf_kernel(Xs, Xs, gamma)
    alpha_star, alpha, bias, n_iter, gap = accel.smo_solve(
        D, Y, float(config.epsilon), float(config.lam), float(config.tol), int(config.max_iter)
    )
    if not np.isfinite(gap):
        raise NumericalError("SMO diverged (non-finite KKT gap)")
    # removing the common part of paired duals keeps the weight vector and the
    # sum constraint, never increases the objective, and makes alpha*alpha' = 0 exact
    common = np.minimum(alpha_star, alpha)
    alpha_star = alpha_star - common
    alpha = alpha - common
    if gap > config.tol:
        warnings.warn(f"SMO hit max_iter={config.max_iter} with KKT gap {gap:.3e} > tol {config.tol:.0e}", RuntimeWarning)
    return SvrModel(Xs, alpha_star, alpha, float(bias), float(gamma), config, x_mean, x_scale, int(n_iter), float(gap))


def svr_predict(model: SvrModel, x) -> np.ndarray:
    """Kernel expansion over the support vectors plus bias."""
    return model.predict(x)


def tune_svr(X, Y, base: SvrConfig | None = None, n_folds: int = 3, seed: int = 0) -> SvrConfig:
    """Grid search (gamma x epsilon x lambda) under inner k-fold CV.

    Grids: gamma in {0.1, 1, 10} x median heuristic, epsilon in
    {0.01, 0.05, 0.1}, lambda in {1, 10, 100}. Returns the config with the
    lowest mean validation RMSE. Expensive: 27 candidates x n_folds fits.
    """
    base = base or SvrConfig()
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    n = X.shape[0]
    folds = np.random.default_rng(seed).permutation(n) % n_folds

    x_mean = X.mean(axis=0)
    x_scale = X.std(axis=0)
    x_scale[x_scale < 1e-12] = 1.0
    gamma0 = median_heuristic_gamma((X - x_mean) / x_scale)

    best = (np.inf, base)
    for gf in GAMMA_GRID_FACTORS:
        for eps in EPSILON_GRID:
            for lam in LAMBDA_GRID:
                cand = replace(base, gamma=gf * gamma0, epsilon=eps, lam=lam)
                errs = []
                for f in range(n_folds):
                    tr, va = folds != f, folds == f
                    model = fit_svr(X[tr], Y[tr], cand)
                    errs.append(np.sqrt(np.mean((model.predict(X[va]) - Y[va]) ** 2)))
                score = float(np.mean(errs))
                if score < best[0]:
                    best = (score, cand)
    return best[1]
