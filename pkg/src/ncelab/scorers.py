"""Score functions s(x, y) over indexed inputs and labels, with analytic gradients.

Two concrete families live here: a tabular scorer whose parameters are the
score table itself (used by enumeration oracles) and a one-ReLU-layer MLP.
The token-sequence encoder family is in :mod:`ncelab.encoders`.

All scorers expose a flat parameter vector with a named block layout, and a
``grad_weighted`` primitive computing ``sum_k w_k * d s(x, y_k)/d theta`` in a
single backward pass; every loss gradient in the package reduces to it.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ConfigError, NumericalError
from .numerics import softmax

CHECKPOINT_VERSION = 1


class ParameterLayout:
    """Maps named parameter blocks to ranges of a flat vector."""

    def __init__(self, shapes: dict[str, tuple[int, ...]]):
        self.shapes = dict(shapes)
        self.offsets = {}
        off = 0
        for name, shape in self.shapes.items():
            size = int(np.prod(shape))
            self.offsets[name] = (off, off + size)
            off += size
        self.size = off

    def flatten(self, blocks: dict[str, np.ndarray]) -> np.ndarray:
        theta = np.empty(self.size)
        for name, shape in self.shapes.items():
            lo, hi = self.offsets[name]
            theta[lo:hi] = np.asarray(blocks[name], dtype=np.float64).reshape(-1)
        return theta

    def unflatten(self, theta: np.ndarray) -> dict[str, np.ndarray]:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.size,):
            raise ConfigError(f"parameter vector must have shape ({self.size},)")
        out = {}
        for name, shape in self.shapes.items():
            lo, hi = self.offsets[name]
            out[name] = theta[lo:hi].reshape(shape)
        return out

    def block(self, theta: np.ndarray, name: str) -> np.ndarray:
        lo, hi = self.offsets[name]
        return theta[lo:hi].reshape(self.shapes[name])

    def to_json(self):
        return {name: list(shape) for name, shape in self.shapes.items()}


class Scorer:
    """Base interface over indexed inputs x in 0..|X|-1 and labels y in 0..|Y|-1."""

    layout: ParameterLayout
    input_count: int
    label_count: int

    @property
    def n_params(self) -> int:
        return self.layout.size

    def get_params(self) -> np.ndarray:
        raise NotImplementedError

    def set_params(self, theta: np.ndarray) -> None:
        raise NotImplementedError

    def score(self, x: int, y: int) -> float:
        return float(self.score_all(x)[y])

    def score_all(self, x: int) -> np.ndarray:
        raise NotImplementedError

    def grad_score(self, x: int, y: int) -> np.ndarray:
        w = np.zeros(1)
        w[0] = 1.0
        return self.grad_weighted(x, np.array([y]), w)

    def grad_weighted(self, x: int, labels: np.ndarray, weights: np.ndarray) -> np.ndarray:
        """sum_k weights[k] * grad s(x, labels[k])."""
        raise NotImplementedError

    def grad_weighted_batch(self, xs, labels_list, weights_list) -> np.ndarray:
        """Deterministic index-order accumulation of per-example weighted grads."""
        g = np.zeros(self.n_params)
        for x, labels, weights in zip(xs, labels_list, weights_list):
            g += self.grad_weighted(x, labels, weights)
        return g

    def perturbed(self, noise: np.ndarray):
        clone = self.copy()
        clone.set_params(self.get_params() + noise)
        return clone

    def copy(self):
        raise NotImplementedError

    def checkpoint(self, path, extra=None) -> None:
        payload = {
            "format_version": CHECKPOINT_VERSION,
            "kind": type(self).__name__,
            "layout": self.layout.to_json(),
            "params": self.get_params().tolist(),
        }
        if extra:
            payload.update(extra)
        Path(path).write_text(json.dumps(payload))


def model_distribution(scorer: Scorer, x: int) -> np.ndarray:
    """Softmax of all label scores for input x (log-sum-exp shifted)."""
    return softmax(scorer.score_all(x))


class TabularScorer(Scorer):
    """Free-form scorer: parameter (x, y) is the score of the pair."""

    def __init__(self, table: np.ndarray):
        self.table = np.array(table, dtype=np.float64)
        if self.table.ndim != 2:
            raise ConfigError("tabular score table must be 2-D")
        if not np.all(np.isfinite(self.table)):
            raise NumericalError("non-finite entries in score table")
        self.input_count, self.label_count = self.table.shape
        self.layout = ParameterLayout({"table": self.table.shape})

    @classmethod
    def random(cls, input_count, label_count, scale=1.0, seed=0):
        rng = np.random.default_rng(seed)
        return cls(scale * rng.standard_normal((input_count, label_count)))

    @classmethod
    def from_log_probs(cls, pop):
        """Scores log pop(y|x); the model distribution then equals pop exactly."""
        with np.errstate(divide="ignore"):
            return cls(np.where(pop.conditionals > 0, np.log(pop.conditionals), -745.0))

    def get_params(self):
        return self.table.reshape(-1).copy()

    def set_params(self, theta):
        self.table = self.layout.block(np.asarray(theta, dtype=np.float64).copy(), "table").copy()

    def copy(self):
        return TabularScorer(self.table)

    def score(self, x, y):
        return float(self.table[x, y])

    def score_all(self, x):
        return self.table[x].copy()

    def grad_weighted(self, x, labels, weights):
        g = np.zeros((self.input_count, self.label_count))
        np.add.at(g[x], np.asarray(labels, dtype=np.int64), np.asarray(weights, dtype=np.float64))
        return g.reshape(-1)


class MlpScorer(Scorer):
    """One-ReLU-layer feedforward scorer over fixed input features.

    score(x, y) = (relu(feat[x] @ W1 + b1) @ W2 + b2)[y]
    """

    def __init__(self, features: np.ndarray, W1, b1, W2, b2):
        self.features = np.asarray(features, dtype=np.float64)
        self.W1 = np.array(W1, dtype=np.float64)
        self.b1 = np.array(b1, dtype=np.float64)
        self.W2 = np.array(W2, dtype=np.float64)
        self.b2 = np.array(b2, dtype=np.float64)
        self.input_count = self.features.shape[0]
        self.label_count = self.W2.shape[1]
        if self.W1.shape != (self.features.shape[1], self.b1.shape[0]):
            raise ConfigError("W1/b1 shapes inconsistent with features")
        if self.W2.shape[0] != self.b1.shape[0] or self.b2.shape != (self.label_count,):
            raise ConfigError("W2/b2 shapes inconsistent")
        self.layout = ParameterLayout(
            {"W1": self.W1.shape, "b1": self.b1.shape, "W2": self.W2.shape, "b2": self.b2.shape}
        )

    @classmethod
    def init_random(cls, input_count, label_count, hidden, features="onehot", seed=0, scale=0.1):
        rng = np.random.default_rng(seed)
        if features == "onehot":
            feats = np.eye(input_count)
        elif features == "gaussian":
            feats = rng.standard_normal((input_count, hidden))
        else:
            feats = np.asarray(features, dtype=np.float64)
        f_dim = feats.shape[1]
        return cls(
            feats,
            scale * rng.standard_normal((f_dim, hidden)),
            np.zeros(hidden),
            scale * rng.standard_normal((hidden, label_count)),
            np.zeros(label_count),
        )

    def get_params(self):
        return self.layout.flatten({"W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": self.b2})

    def set_params(self, theta):
        blocks = self.layout.unflatten(theta)
        self.W1 = blocks["W1"].copy()
        self.b1 = blocks["b1"].copy()
        self.W2 = blocks["W2"].copy()
        self.b2 = blocks["b2"].copy()

    def copy(self):
        return MlpScorer(self.features, self.W1, self.b1, self.W2, self.b2)

    def _hidden(self, x):
        return np.maximum(self.features[x] @ self.W1 + self.b1, 0.0)

    def score_all(self, x):
        return self._hidden(x) @ self.W2 + self.b2

    def score_all_batch(self, xs):
        h = np.maximum(self.features[xs] @ self.W1 + self.b1, 0.0)
        return h @ self.W2 + self.b2

    def grad_weighted(self, x, labels, weights):
        return self.grad_weighted_batch([x], [labels], [weights])

    def grad_weighted_batch(self, xs, labels_list, weights_list):
        xs = np.asarray(xs, dtype=np.int64)
        feats = self.features[xs]
        pre = feats @ self.W1 + self.b1
        h = np.maximum(pre, 0.0)

        dW2 = np.zeros_like(self.W2)
        db2 = np.zeros_like(self.b2)
        dh = np.zeros_like(h)
        for i, (labels, weights) in enumerate(zip(labels_list, weights_list)):
            labels = np.asarray(labels, dtype=np.int64)
            weights = np.asarray(weights, dtype=np.float64)
            np.add.at(db2, labels, weights)
            np.add.at(dW2.T, labels, weights[:, None] * h[i])
            dh[i] = self.W2[:, labels] @ weights
        dpre = dh * (pre > 0)
        dW1 = feats.T @ dpre
        db1 = dpre.sum(axis=0)
        return self.layout.flatten({"W1": dW1, "b1": db1, "W2": dW2, "b2": db2})
