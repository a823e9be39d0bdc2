"""Synthetic joint distributions over a finite input space and label space.

A population is defined by a marginal over inputs and a conditional label
distribution per input.  The synthetic builder produces peaky conditionals
by pushing temperature-scaled Gaussian logits through a softmax.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .numerics import softmax

FORMAT_VERSION = 1

_PROB_ATOL = 1e-12


@dataclass(frozen=True)
class LabelSpace:
    """Finite label space with labels indexed 0..size-1."""

    size: int

    def __post_init__(self):
        if self.size < 2:
            raise ConfigError(f"label space needs size >= 2, got {self.size}")


@dataclass(frozen=True)
class SyntheticPopulationConfig:
    label_count: int
    input_count: int = 32
    peakiness: float = 8.0
    seed: int = 0

    def __post_init__(self):
        if self.label_count < 2:
            raise ConfigError(f"label_count must be >= 2, got {self.label_count}")
        if self.input_count < 1:
            raise ConfigError(f"input_count must be >= 1, got {self.input_count}")
        if not self.peakiness > 0:
            raise ConfigError(f"peakiness must be > 0, got {self.peakiness}")


class PopulationDistribution:
    """Immutable joint distribution pop(x, y) = input_marginal[x] * conditionals[x, y]."""

    def __init__(self, input_marginal, conditionals, seed=None):
        input_marginal = np.asarray(input_marginal, dtype=np.float64)
        conditionals = np.asarray(conditionals, dtype=np.float64)
        if conditionals.ndim != 2 or input_marginal.ndim != 1:
            raise ConfigError("conditionals must be |X| x |Y|, input_marginal length |X|")
        if conditionals.shape[0] != input_marginal.shape[0]:
            raise ConfigError("input_marginal length must match conditionals rows")
        if np.any(conditionals < 0) or np.any(input_marginal < 0):
            raise ConfigError("probabilities must be nonnegative")
        if abs(input_marginal.sum() - 1.0) > _PROB_ATOL:
            raise ConfigError("input_marginal must sum to 1")
        if np.max(np.abs(conditionals.sum(axis=1) - 1.0)) > _PROB_ATOL:
            raise ConfigError("every conditional row must sum to 1")
        self._input_marginal = input_marginal
        self._conditionals = conditionals
        self._input_marginal.setflags(write=False)
        self._conditionals.setflags(write=False)
        self.seed = seed

    @property
    def input_count(self) -> int:
        return self._conditionals.shape[0]

    @property
    def label_count(self) -> int:
        return self._conditionals.shape[1]

    @property
    def input_marginal(self) -> np.ndarray:
        return self._input_marginal

    @property
    def conditionals(self) -> np.ndarray:
        return self._conditionals

    def conditional(self, x: int) -> np.ndarray:
        return self._conditionals[x]

    def joint(self) -> np.ndarray:
        """pop(x, y) as an |X| x |Y| matrix."""
        return self._input_marginal[:, None] * self._conditionals

    def save(self, path) -> None:
        payload = {
            "format_version": FORMAT_VERSION,
            "label_count": self.label_count,
            "input_count": self.input_count,
            "input_marginal": self._input_marginal.tolist(),
            "conditionals": self._conditionals.tolist(),
            "seed": self.seed,
        }
        Path(path).write_text(json.dumps(payload))

    @classmethod
    def load(cls, path) -> "PopulationDistribution":
        payload = json.loads(Path(path).read_text())
        if payload.get("format_version") != FORMAT_VERSION:
            raise ConfigError(f"unsupported population format: {payload.get('format_version')}")
        return cls(payload["input_marginal"], payload["conditionals"], seed=payload.get("seed"))


def build_synthetic_population(cfg: SyntheticPopulationConfig) -> PopulationDistribution:
    """Uniform input marginal; each conditional row is softmax(peakiness * g),
    g a fresh vector of standard-normal draws from the seeded generator."""
    rng = np.random.default_rng(cfg.seed)
    rows = np.empty((cfg.input_count, cfg.label_count))
    for x in range(cfg.input_count):
        g = rng.standard_normal(cfg.label_count)
        rows[x] = softmax(cfg.peakiness * g)
    marginal_x = np.full(cfg.input_count, 1.0 / cfg.input_count)
    return PopulationDistribution(marginal_x, rows, seed=cfg.seed)


def sample_pair(pop: PopulationDistribution, rng) -> tuple[int, int]:
    """Draw (x, y) with x ~ input_marginal and y ~ conditionals[x]."""
    x = int(rng.choice(pop.input_count, p=pop.input_marginal))
    y = int(rng.choice(pop.label_count, p=pop.conditional(x)))
    return x, y


def sample_pairs(pop: PopulationDistribution, n: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized n-draw version of sample_pair."""
    xs = rng.choice(pop.input_count, size=n, p=pop.input_marginal)
    # inverse-CDF per row; one uniform per draw keeps this O(n log |Y|)
    cdf = np.cumsum(pop.conditionals, axis=1)
    u = rng.random(n)
    ys = np.empty(n, dtype=np.int64)
    for x in np.unique(xs):
        mask = xs == x
        ys[mask] = np.searchsorted(cdf[x], u[mask], side="right")
    ys = np.minimum(ys, pop.label_count - 1)
    return xs.astype(np.int64), ys


def marginal(pop: PopulationDistribution) -> np.ndarray:
    """Label marginal pop(y) = sum_x pop(x) pop(y|x)."""
    return pop.input_marginal @ pop.conditionals
