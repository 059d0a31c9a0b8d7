"""Two-member neural-network ensemble for regression.

Each member is a fully connected net with ReLU hidden layers, identity
output and squared-error loss plus an L2 penalty on the weights, trained by
mini-batch gradient descent with back-propagation. Member predictions are
combined by plain averaging or by a stacked linear meta-model fitted on a
held-out slice of the training data. Inputs and targets are standardized
internally with training statistics.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..errors import NumericalError


def _relu(x):
    return np.maximum(x, 0.0)


class Mlp:
    """Minimal fully connected regression net (ReLU hidden, identity output)."""

    def __init__(self, n_inputs: int, hidden, seed: int = 0, lr: float = 0.05,
                 epochs: int = 200, batch_size: int = 32, l2: float = 1e-4):
        self.sizes = [n_inputs, *hidden, 1]
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.l2 = l2
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.weights = [
            rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in)
            for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:])
        ]
        self.biases = [np.zeros(fan_out) for fan_out in self.sizes[1:]]
        self.loss_history: list[float] = []

    def forward(self, X) -> np.ndarray:
        a = np.atleast_2d(np.asarray(X, dtype=np.float64))
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            a = _relu(a @ W + b)
        return (a @ self.weights[-1] + self.biases[-1])[:, 0]

    def loss_and_grad(self, X, y):
        """Mean squared error plus L2 penalty, with back-propagated gradients.

        Returns (loss, weight grads, bias grads).
        """
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        y = np.asarray(y, dtype=np.float64)
        n = X.shape[0]

        activations = [X]
        pre = []
        a = X
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            z = a @ W + b
            pre.append(z)
            a = _relu(z)
            activations.append(a)
        out = (a @ self.weights[-1] + self.biases[-1])[:, 0]

        err = out - y
        loss = float(err @ err) / n + self.l2 * sum(float((W * W).sum()) for W in self.weights)

        grad_w = [None] * len(self.weights)
        grad_b = [None] * len(self.biases)
        delta = (2.0 / n) * err[:, None]
        grad_w[-1] = activations[-1].T @ delta + 2.0 * self.l2 * self.weights[-1]
        grad_b[-1] = delta.sum(axis=0)
        for layer in range(len(self.weights) - 2, -1, -1):
            delta = (delta @ self.weights[layer + 1].T) * (pre[layer] > 0)
            grad_w[layer] = activations[layer].T @ delta + 2.0 * self.l2 * self.weights[layer]
            grad_b[layer] = delta.sum(axis=0)
        return loss, grad_w, grad_b

    def fit(self, X, y) -> "Mlp":
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        y = np.asarray(y, dtype=np.float64)
        n = X.shape[0]
        rng = np.random.default_rng(self.seed + 1)
        batch = min(self.batch_size, n)
        self.loss_history = [self.loss_and_grad(X, y)[0]]
        for _ in range(self.epochs):
            order = rng.permutation(n)
            for start in range(0, n, batch):
                rows = order[start : start + batch]
                _, gw, gb = self.loss_and_grad(X[rows], y[rows])
                for k in range(len(self.weights)):
                    self.weights[k] -= self.lr * gw[k]
                    self.biases[k] -= self.lr * gb[k]
            epoch_loss = self.loss_and_grad(X, y)[0]
            if not np.isfinite(epoch_loss):
                raise NumericalError("neural-network training diverged (non-finite loss)")
            self.loss_history.append(epoch_loss)
        return self

    # flat parameter get/set, used by the finite-difference gradient check
    def parameter_vector(self) -> np.ndarray:
        return np.concatenate([a.ravel() for pair in zip(self.weights, self.biases) for a in pair])

    def set_parameter_vector(self, vec: np.ndarray) -> None:
        pos = 0
        for k in range(len(self.weights)):
            w_size = self.weights[k].size
            self.weights[k] = vec[pos : pos + w_size].reshape(self.weights[k].shape).copy()
            pos += w_size
            b_size = self.biases[k].size
            self.biases[k] = vec[pos : pos + b_size].copy()
            pos += b_size
        if pos != vec.size:
            raise ValueError("parameter vector size mismatch")

    def gradient_vector(self, X, y) -> np.ndarray:
        _, gw, gb = self.loss_and_grad(X, y)
        return np.concatenate([a.ravel() for pair in zip(gw, gb) for a in pair])

    def to_dict(self) -> dict:
        return {
            "sizes": self.sizes,
            "lr": self.lr,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "l2": self.l2,
            "seed": self.seed,
            "weights": [W.tolist() for W in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Mlp":
        net = cls(d["sizes"][0], d["sizes"][1:-1], seed=d["seed"], lr=d["lr"],
                  epochs=d["epochs"], batch_size=d["batch_size"], l2=d["l2"])
        net.weights = [np.array(W) for W in d["weights"]]
        net.biases = [np.array(b) for b in d["biases"]]
        return net


@dataclass
class EnnConfig:
    # two members with their own architectures; distinct seeds decorrelate them
    hidden_members: tuple = ((32, 16), (64, 32))
    member_seeds: tuple | None = None  # default (seed, seed + 1)
    seed: int = 0
    combiner: str = "average"  # or "stacked"
    lr: float = 0.05
    epochs: int = 200
    batch_size: int = 32
    l2: float = 1e-4
    holdout_fraction: float = 0.2  # stacked combiner only

    def __post_init__(self):
        if self.combiner not in ("average", "stacked"):
            raise ValueError("combiner must be 'average' or 'stacked'")
        if len(self.hidden_members) != 2:
            raise ValueError("the ensemble uses exactly two member networks")

    def seeds(self) -> tuple:
        s = self.member_seeds if self.member_seeds is not None else (self.seed, self.seed + 1)
        if s[0] == s[1]:
            warnings.warn("identical member seeds: the ensemble degenerates to one network", RuntimeWarning)
        return s


class EnnModel:
    kind = "enn"

    def __init__(self, members, config: EnnConfig, x_mean, x_scale, y_mean, y_scale, stack_weights=None):
        self.members = members
        self.config = config
        self.x_mean, self.x_scale = x_mean, x_scale
        self.y_mean, self.y_scale = y_mean, y_scale
        self.stack_weights = stack_weights  # (intercept, w1, w2) in standardized space

    def _standardize(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return (X - self.x_mean) / self.x_scale

    def member_predictions(self, X) -> np.ndarray:
        """Per-member predictions on the original target scale: (2, n)."""
        Xs = self._standardize(X)
        return np.stack([self.y_mean + self.y_scale * net.forward(Xs) for net in self.members])

    def predict(self, X) -> np.ndarray:
        preds = self.member_predictions(X)
        if self.config.combiner == "average":
            return (preds[0] + preds[1]) / 2.0
        w0, w1, w2 = self.stack_weights
        zs = (preds - self.y_mean) / self.y_scale
        return self.y_mean + self.y_scale * (w0 + w1 * zs[0] + w2 * zs[1])

    def to_dict(self) -> dict:
        return {
            "format": "geoblend-model",
            "version": 1,
            "kind": self.kind,
            "members": [net.to_dict() for net in self.members],
            "config": {
                "hidden_members": [list(h) for h in self.config.hidden_members],
                "member_seeds": list(self.config.member_seeds) if self.config.member_seeds else None,
                "seed": self.config.seed,
                "combiner": self.config.combiner,
                "lr": self.config.lr,
                "epochs": self.config.epochs,
                "batch_size": self.config.batch_size,
                "l2": self.config.l2,
                "holdout_fraction": self.config.holdout_fraction,
            },
            "x_mean": self.x_mean.tolist(),
            "x_scale": self.x_scale.tolist(),
            "y_mean": self.y_mean,
            "y_scale": self.y_scale,
            "stack_weights": list(self.stack_weights) if self.stack_weights is not None else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EnnModel":
        cfg = dict(d["config"])
        cfg["hidden_members"] = tuple(tuple(h) for h in cfg["hidden_members"])
        cfg["member_seeds"] = tuple(cfg["member_seeds"]) if cfg["member_seeds"] else None
        config = EnnConfig(**cfg)
        members = [Mlp.from_dict(m) for m in d["members"]]
        sw = tuple(d["stack_weights"]) if d["stack_weights"] is not None else None
        return cls(members, config, np.array(d["x_mean"]), np.array(d["x_scale"]),
                   float(d["y_mean"]), float(d["y_scale"]), sw)


def fit_enn(X, Y, config: EnnConfig | None = None) -> EnnModel:
    """Train both members; fit the stacked combiner on a held-out slice."""
    config = config or EnnConfig()
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    n = X.shape[0]
    if n < min(config.batch_size, 8):
        raise ValueError(f"need at least {min(config.batch_size, 8)} rows")

    x_mean = X.mean(axis=0)
    x_scale = X.std(axis=0)
    x_scale[x_scale < 1e-12] = 1.0
    y_mean = float(Y.mean())
    y_scale = float(Y.std()) or 1.0
    Xs = (X - x_mean) / x_scale
    ys = (Y - y_mean) / y_scale

    if config.combiner == "stacked":
        rng = np.random.default_rng(config.seed)
        order = rng.permutation(n)
        n_hold = max(2, int(round(config.holdout_fraction * n)))
        hold, train = order[:n_hold], order[n_hold:]
    else:
        hold, train = np.array([], dtype=int), np.arange(n)

    seeds = config.seeds()
    members = []
    for hidden, seed in zip(config.hidden_members, seeds):
        net = Mlp(X.shape[1], hidden, seed=seed, lr=config.lr, epochs=config.epochs,
                  batch_size=config.batch_size, l2=config.l2)
        net.fit(Xs[train], ys[train])
        if net.loss_history[-1] > net.loss_history[0]:
            warnings.warn("member training loss did not decrease; consider lowering lr", RuntimeWarning)
        members.append(net)

    stack_weights = None
    if config.combiner == "stacked":
        f1 = members[0].forward(Xs[hold])
        f2 = members[1].forward(Xs[hold])
        design = np.column_stack([np.ones(hold.size), f1, f2])
        coef, *_ = np.linalg.lstsq(design, ys[hold], rcond=None)
        stack_weights = (float(coef[0]), float(coef[1]), float(coef[2]))
    return EnnModel(members, config, x_mean, x_scale, y_mean, y_scale, stack_weights)
