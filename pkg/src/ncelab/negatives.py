"""Negative-example strategies.

Six strategies: uniform (iid or distinct), population-marginal, model-iid,
model-proportional without replacement ("hard"), greedy top scoring, and
mixed hard/random.  Each sampler that admits a closed-form ordered-tuple
density exposes it, so exact loss expectations and the gamma/bias machinery
can enumerate over tuples.

Sampling without replacement proportional to exp(score) is done with the
Gumbel top-k trick, which is distributionally identical to sequential
renormalized sampling and vectorizes cleanly.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigError

SAMPLER_KINDS = ("uniform", "uniform_distinct", "marginal", "model_iid",
                 "hard_distinct", "greedy_top", "mixed")


@dataclass(frozen=True)
class SamplerSpec:
    kind: str
    hard_fraction: float = 0.5

    def __post_init__(self):
        if self.kind not in SAMPLER_KINDS:
            raise ConfigError(f"unknown sampler kind: {self.kind}")
        if not 0.0 <= self.hard_fraction <= 1.0:
            raise ConfigError("hard_fraction must lie in [0, 1]")


def mixed_split(n: int, p: float) -> tuple[int, int]:
    """Round-half-up split of n negative slots into (hard, random)."""
    n_hard = int(np.floor(p * n + 0.5))
    return n_hard, n - n_hard


# ---------------------------------------------------------------------------
# functional sampling ops
# ---------------------------------------------------------------------------

def sample_uniform(pool, gold, n, rng, distinct=False):
    """n uniform draws from pool.  iid by default (gold and duplicates
    permitted); the distinct variant excludes the gold and duplicates."""
    pool = np.asarray(pool, dtype=np.int64)
    if n < 1:
        raise ConfigError("need n >= 1 negatives")
    if not distinct:
        return rng.choice(pool, size=n, replace=True)
    allowed = pool[pool != gold]
    if allowed.size < n:
        raise ConfigError(f"pool of {pool.size} too small for {n} distinct negatives")
    return rng.choice(allowed, size=n, replace=False)


def sample_hard_distinct(scorer, x, gold, n, rng, pool=None):
    """n distinct non-gold labels, sequentially proportional to exp(score)
    among the remaining labels (Gumbel top-k in the log domain)."""
    scores = scorer.score_all(x)
    if pool is None:
        pool = np.arange(scores.shape[0])
    pool = np.asarray(pool, dtype=np.int64)
    allowed = pool[pool != gold]
    if allowed.size < n:
        raise ConfigError(f"pool of {pool.size} too small for {n} distinct negatives")
    keys = scores[allowed] + rng.gumbel(size=allowed.size)
    top = np.argsort(-keys, kind="stable")[:n]
    return allowed[top]


def sample_model_iid(scorer, x, n, rng):
    """n iid draws from the model distribution; duplicates and gold allowed."""
    from .scorers import model_distribution

    p = model_distribution(scorer, x)
    return rng.choice(p.shape[0], size=n, replace=True, p=p)


def greedy_top(scorer, x, gold, n, pool=None):
    """The n highest-scoring non-gold labels, ties to the lowest index."""
    scores = scorer.score_all(x)
    if pool is None:
        pool = np.arange(scores.shape[0])
    pool = np.asarray(pool, dtype=np.int64)
    allowed = pool[pool != gold]
    if allowed.size < n:
        raise ConfigError(f"pool of {pool.size} too small for {n} distinct negatives")
    order = np.argsort(-scores[allowed], kind="stable")
    return allowed[order[:n]]


def sample_mixed(scorer, x, gold, n, p, rng, pool=None):
    """round-half-up(p*n) hard-distinct negatives followed by uniform distinct
    draws over the labels not yet taken; the full tuple stays duplicate-free."""
    if not 0.0 <= p <= 1.0:
        raise ConfigError("mixed fraction p must lie in [0, 1]")
    scores = scorer.score_all(x)
    if pool is None:
        pool = np.arange(scores.shape[0])
    pool = np.asarray(pool, dtype=np.int64)
    if pool[pool != gold].size < n:
        raise ConfigError(f"pool of {pool.size} too small for {n} distinct negatives")
    n_hard, n_rand = mixed_split(n, p)
    negs = np.empty(n, dtype=np.int64)
    if n_hard:
        negs[:n_hard] = sample_hard_distinct(scorer, x, gold, n_hard, rng, pool=pool)
    if n_rand:
        taken = np.append(negs[:n_hard], gold)
        remaining = np.setdiff1d(pool, taken)
        negs[n_hard:] = rng.choice(remaining, size=n_rand, replace=False)
    return negs


# ---------------------------------------------------------------------------
# sampler objects with ordered-tuple densities
# ---------------------------------------------------------------------------

class NegativeSampler:
    """Conditional distribution over ordered negative tuples given (x, gold)."""

    kind: str
    has_density = False
    conditions_on_gold = True
    distinct_support = False

    def sample(self, scorer, x, gold, n, rng) -> np.ndarray:
        raise NotImplementedError

    def tuple_prob(self, scorer, x, gold, negs) -> float:
        raise NotImplementedError(f"{self.kind} has no enumerable density")

    def enumerate_tuples(self, scorer, x, gold, n):
        """Yield (ordered tuple, probability) over the sampler's support.

        Samplers whose support excludes the gold and duplicates iterate
        permutations of the non-gold labels instead of the full product
        space, which keeps K = |Y| enumerations tractable.
        """
        if not self.has_density:
            raise ConfigError(f"sampler {self.kind} has no enumerable density")
        label_count = scorer.score_all(x).shape[0]
        if self.distinct_support:
            support = itertools.permutations(
                [y for y in range(label_count) if y != int(gold)], n)
        else:
            support = itertools.product(range(label_count), repeat=n)
        for negs in support:
            prob = self.tuple_prob(scorer, x, gold, negs)
            if prob > 0.0:
                yield negs, prob


class UniformSampler(NegativeSampler):
    kind = "uniform"
    has_density = True
    conditions_on_gold = False

    def sample(self, scorer, x, gold, n, rng):
        return sample_uniform(np.arange(scorer.score_all(x).shape[0]), gold, n, rng)

    def tuple_prob(self, scorer, x, gold, negs):
        label_count = scorer.score_all(x).shape[0]
        return (1.0 / label_count) ** len(negs)


class UniformDistinctSampler(NegativeSampler):
    kind = "uniform_distinct"
    has_density = True
    distinct_support = True

    def sample(self, scorer, x, gold, n, rng):
        return sample_uniform(np.arange(scorer.score_all(x).shape[0]), gold, n, rng,
                              distinct=True)

    def tuple_prob(self, scorer, x, gold, negs):
        label_count = scorer.score_all(x).shape[0]
        used = {int(gold)}
        prob = 1.0
        for y in negs:
            if int(y) in used:
                return 0.0
            prob /= label_count - len(used)
            used.add(int(y))
        return prob


class MarginalSampler(NegativeSampler):
    """iid draws from the population label marginal."""

    kind = "marginal"
    has_density = True
    conditions_on_gold = False

    def __init__(self, pop):
        from .population import marginal

        self.weights = marginal(pop)

    def sample(self, scorer, x, gold, n, rng):
        return rng.choice(self.weights.shape[0], size=n, replace=True, p=self.weights)

    def tuple_prob(self, scorer, x, gold, negs):
        return float(np.prod(self.weights[np.asarray(negs, dtype=np.int64)]))


class ModelIidSampler(NegativeSampler):
    kind = "model_iid"
    has_density = True
    conditions_on_gold = False

    def sample(self, scorer, x, gold, n, rng):
        return sample_model_iid(scorer, x, n, rng)

    def tuple_prob(self, scorer, x, gold, negs):
        from .scorers import model_distribution

        p = model_distribution(scorer, x)
        return float(np.prod(p[np.asarray(negs, dtype=np.int64)]))


def _sequential_log_prob(scores, gold, negs):
    """Log probability of an ordered without-replacement draw proportional to
    exp(score) among the labels not yet taken (gold excluded throughout)."""
    mask = np.ones(scores.shape[0], dtype=bool)
    mask[gold] = False
    logp = 0.0
    for y in negs:
        y = int(y)
        if not mask[y]:
            return -np.inf
        logp += scores[y] - logsumexp(scores[mask])
        mask[y] = False
    return logp


class HardDistinctSampler(NegativeSampler):
    kind = "hard_distinct"
    has_density = True
    distinct_support = True

    def sample(self, scorer, x, gold, n, rng):
        return sample_hard_distinct(scorer, x, gold, n, rng)

    def tuple_prob(self, scorer, x, gold, negs):
        return float(np.exp(_sequential_log_prob(scorer.score_all(x), gold, negs)))

    def enumerate_tuples(self, scorer, x, gold, n):
        # depth-first over distinct non-gold prefixes so the sequential
        # renormalization is shared instead of recomputed per tuple
        scores = scorer.score_all(x)
        weights = np.exp(scores - scores.max())
        allowed = [y for y in range(scores.shape[0]) if y != int(gold)]
        total = float(sum(weights[y] for y in allowed))

        def walk(prefix, remaining, denom, prob):
            if len(prefix) == n:
                yield tuple(prefix), prob
                return
            for i, y in enumerate(remaining):
                w = float(weights[y])
                rest = remaining[:i] + remaining[i + 1:]
                yield from walk(prefix + [y], rest, denom - w, prob * w / denom)

        yield from walk([], allowed, total, 1.0)


class GreedyTopSampler(NegativeSampler):
    """Point mass on the top-scoring distinct non-gold tuple."""

    kind = "greedy_top"
    has_density = True
    distinct_support = True

    def sample(self, scorer, x, gold, n, rng):
        return greedy_top(scorer, x, gold, n)

    def enumerate_tuples(self, scorer, x, gold, n):
        yield tuple(int(y) for y in greedy_top(scorer, x, gold, n)), 1.0

    def tuple_prob(self, scorer, x, gold, negs):
        target = greedy_top(scorer, x, gold, len(negs))
        return 1.0 if tuple(int(y) for y in negs) == tuple(int(y) for y in target) else 0.0


class MixedSampler(NegativeSampler):
    kind = "mixed"
    has_density = True
    distinct_support = True

    def __init__(self, hard_fraction=0.5):
        if not 0.0 <= hard_fraction <= 1.0:
            raise ConfigError("hard_fraction must lie in [0, 1]")
        self.hard_fraction = hard_fraction

    def sample(self, scorer, x, gold, n, rng):
        return sample_mixed(scorer, x, gold, n, self.hard_fraction, rng)

    def tuple_prob(self, scorer, x, gold, negs):
        scores = scorer.score_all(x)
        label_count = scores.shape[0]
        n_hard, _ = mixed_split(len(negs), self.hard_fraction)
        logp = _sequential_log_prob(scores, gold, negs[:n_hard])
        if not np.isfinite(logp):
            return 0.0
        used = {int(gold)} | {int(y) for y in negs[:n_hard]}
        prob = float(np.exp(logp))
        for y in negs[n_hard:]:
            if int(y) in used:
                return 0.0
            prob /= label_count - len(used)
            used.add(int(y))
        return prob


def make_sampler(spec: SamplerSpec, pop=None) -> NegativeSampler:
    if spec.kind == "uniform":
        return UniformSampler()
    if spec.kind == "uniform_distinct":
        return UniformDistinctSampler()
    if spec.kind == "marginal":
        if pop is None:
            raise ConfigError("marginal sampler needs a population")
        return MarginalSampler(pop)
    if spec.kind == "model_iid":
        return ModelIidSampler()
    if spec.kind == "hard_distinct":
        return HardDistinctSampler()
    if spec.kind == "greedy_top":
        return GreedyTopSampler()
    if spec.kind == "mixed":
        return MixedSampler(spec.hard_fraction)
    raise ConfigError(f"unknown sampler kind: {spec.kind}")
