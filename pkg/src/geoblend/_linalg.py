"""Small shared numerics: guarded Cholesky, variance clamping, optimizer driver."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla
from scipy import optimize

from .errors import NumericalError

# variances in (-1e-8, 0) are rounding noise and clamp to zero; anything
# lower is treated as a genuine failure
VARIANCE_HARD_FLOOR = -1e-8


def chol_factor(mat: np.ndarray):
    """Cholesky factorization with escalating diagonal jitter on failure."""
    scale = float(np.mean(np.diag(mat))) or 1.0
    for jitter in (0.0, 1e-12, 1e-10, 1e-8, 1e-6):
        try:
            return sla.cho_factor(mat + (jitter * scale) * np.eye(mat.shape[0]) if jitter else mat, lower=True)
        except sla.LinAlgError:
            continue
    raise NumericalError("covariance matrix is not positive definite (jitter retries exhausted)")


def clamp_variances(var: np.ndarray) -> tuple[np.ndarray, int]:
    """Zero out tiny negative variances; hard-error on large negatives.

    Returns (clamped array, number of clamped entries).
    """
    var = np.asarray(var, dtype=np.float64)
    worst = var.min() if var.size else 0.0
    if worst < VARIANCE_HARD_FLOOR:
        raise NumericalError(f"prediction variance {worst:.3e} below hard floor {VARIANCE_HARD_FLOOR:.0e}")
    neg = var < 0.0
    n_clamped = int(neg.sum())
    if n_clamped:
        var = np.where(neg, 0.0, var)
    return var, n_clamped


@dataclass
class OptResult:
    x: np.ndarray
    value: float
    converged: bool
    message: str
    n_evals: int


def multi_start_maximize(neg_objective, x0, bounds, n_starts=3, seed=0, maxiter=200) -> OptResult:
    """L-BFGS-B on a negated objective from x0 plus jittered restarts.

    Returns the best result across starts. Non-convergence is reported via
    ``converged``/``message`` with the best-so-far point, not raised; callers
    decide whether that is fatal.
    """
    rng = np.random.default_rng(seed)
    x0 = np.asarray(x0, dtype=np.float64)
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    best = None
    for start in range(max(1, n_starts)):
        xs = x0 if start == 0 else np.clip(x0 + rng.normal(0.0, 0.75, size=x0.shape), lo, hi)
        try:
            res = optimize.minimize(neg_objective, xs, method="L-BFGS-B", bounds=bounds, options={"maxiter": maxiter})
        except NumericalError:
            continue
        if best is None or res.fun < best.fun:
            best = res
    if best is None:
        raise NumericalError("all optimizer starts failed")
    if not best.success:
        warnings.warn(f"optimizer did not fully converge: {best.message}; using best-so-far", RuntimeWarning)
    return OptResult(
        x=np.asarray(best.x),
        value=-float(best.fun),
        converged=bool(best.success),
        message=str(best.message),
        n_evals=int(best.nfev),
    )
