"""Random-forest regression built on the accelerated CART grower.

500 trees on bootstrap samples by default; each node scans a random subset
of m_try features (default p/3, minimum 1) for the split minimizing the
children's residual sum of squares, with the threshold at the midpoint of
the adjacent distinct values. Leaf values are in-leaf response means. Nodes
with at most ``min_node_size`` rows are not split. Intervals come from the
2.5%/97.5% quantiles of the per-tree predictions (linear interpolation).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import accel


@dataclass
class RandomForestConfig:
    n_trees: int = 500
    m_try: int | None = None  # default: max(1, p // 3)
    min_node_size: int = 5
    bootstrap: bool = True
    seed: int = 0
    max_depth: int | None = None

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.m_try is not None and self.m_try < 1:
            raise ValueError("m_try must be >= 1 when given")


class RandomForest:
    kind = "rf"

    def __init__(self, trees, config: RandomForestConfig, oob_rmse: float | None, y_range):
        self.trees = trees  # list of (feature, threshold, left, right, value) arrays
        self.config = config
        self.oob_rmse = oob_rmse
        self.y_range = y_range

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def per_tree_predictions(self, X) -> np.ndarray:
        X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
        out = np.empty((self.n_trees, X.shape[0]))
        for t, (feature, threshold, left, right, value) in enumerate(self.trees):
            out[t] = accel.predict_tree(feature, threshold, left, right, value, X)
        return out

    def predict(self, X) -> np.ndarray:
        return self.per_tree_predictions(X).mean(axis=0)

    def predict_interval(self, X, lo: float = 2.5, hi: float = 97.5) -> tuple[np.ndarray, np.ndarray]:
        preds = self.per_tree_predictions(X)
        bounds = np.percentile(preds, [lo, hi], axis=0, method="linear")
        return bounds[0], bounds[1]

    def to_dict(self) -> dict:
        return {
            "format": "geoblend-model",
            "version": 1,
            "kind": self.kind,
            "config": {
                "n_trees": self.config.n_trees,
                "m_try": self.config.m_try,
                "min_node_size": self.config.min_node_size,
                "bootstrap": self.config.bootstrap,
                "seed": self.config.seed,
                "max_depth": self.config.max_depth,
            },
            "oob_rmse": self.oob_rmse,
            "y_range": list(self.y_range),
            "trees": [
                {
                    "feature": f.tolist(),
                    "threshold": t.tolist(),
                    "left": l.tolist(),
                    "right": r.tolist(),
                    "value": v.tolist(),
                }
                for f, t, l, r, v in self.trees
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RandomForest":
        trees = [
            (
                np.array(t["feature"], dtype=np.int64),
                np.array(t["threshold"], dtype=np.float64),
                np.array(t["left"], dtype=np.int64),
                np.array(t["right"], dtype=np.int64),
                np.array(t["value"], dtype=np.float64),
            )
            for t in d["trees"]
        ]
        return cls(trees, RandomForestConfig(**d["config"]), d["oob_rmse"], tuple(d["y_range"]))


def fit_forest(X, Y, config: RandomForestConfig | None = None) -> RandomForest:
    """Grow the forest; records the out-of-bag RMSE when bootstrapping."""
    config = config or RandomForestConfig()
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    n, p = X.shape
    if n < 2:
        raise ValueError("need at least 2 rows")
    m_try = config.m_try if config.m_try is not None else max(1, p // 3)
    m_try = min(m_try, p)
    max_depth = -1 if config.max_depth is None else config.max_depth

    rng = np.random.default_rng(config.seed)
    trees = []
    oob_sum = np.zeros(n)
    oob_count = np.zeros(n, dtype=np.int64)
    for _ in range(config.n_trees):
        if config.bootstrap:
            sample = rng.integers(0, n, size=n)
        else:
            sample = np.arange(n, dtype=np.int64)
        tree_seed = int(rng.integers(0, 2**63 - 1))
        feature, threshold, left, right, value, _ = accel.grow_tree(
            X, Y, np.ascontiguousarray(sample, dtype=np.int64), m_try, config.min_node_size, max_depth, tree_seed
        )
        tree = (np.asarray(feature), np.asarray(threshold), np.asarray(left), np.asarray(right), np.asarray(value))
        trees.append(tree)
        if config.bootstrap:
            oob = np.ones(n, dtype=bool)
            oob[np.unique(sample)] = False
            if oob.any():
                preds = accel.predict_tree(*tree, np.ascontiguousarray(X[oob]))
                oob_sum[oob] += preds
                oob_count[oob] += 1

    oob_rmse = None
    if config.bootstrap and (oob_count > 0).any():
        covered = oob_count > 0
        oob_pred = oob_sum[covered] / oob_count[covered]
        oob_rmse = float(np.sqrt(np.mean((oob_pred - Y[covered]) ** 2)))
    return RandomForest(trees, config, oob_rmse, (float(Y.min()), float(Y.max())))


def forest_interval(forest: RandomForest, x) -> tuple[np.ndarray, np.ndarray]:
    """Empirical 2.5%/97.5% quantile interval across the per-tree predictions."""
    return forest.predict_interval(x)
