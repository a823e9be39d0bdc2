"""Gradient-bias machinery.

The candidate-softmax loss is a biased estimator of the cross-entropy
gradient.  The bias has a closed form: per input, the selection probability
gamma(y|x) -- the chance that y enters the candidate tuple and is then picked
by the discriminator -- replaces the model probability p(y|x), and the bias is
the (p - gamma)-weighted sum of score gradients.  This module computes gamma
exactly by tuple enumeration, assembles the closed-form bias, computes the
direct gradient-difference oracle, a cheap heuristic approximation, and a
Monte-Carlo estimator for scales where enumeration is out of reach.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, EnumerationLimitError
from .losses import (
    DEFAULT_MAX_K,
    DEFAULT_MAX_LABELS,
    CandidateTuple,
    cross_entropy_exact,
    hard_nce_empirical,
    hard_nce_expected,
)
from .numerics import log_softmax, softmax
from .scorers import model_distribution


@dataclass
class GammaTable:
    """Per-input candidate-selection probabilities; rows sum to 1."""

    values: np.ndarray


@dataclass
class BiasReport:
    bias_vector: np.ndarray
    method: str
    epsilon_table: np.ndarray | None = None
    simulation_values: list = field(default_factory=list)

    @property
    def bias_norm(self) -> float:
        return float(np.linalg.norm(self.bias_vector))


def gamma_exact(scorer, pop, sampler, x, K,
                max_labels=DEFAULT_MAX_LABELS, max_k=DEFAULT_MAX_K) -> np.ndarray:
    """Exact selection probabilities for one input, by full enumeration over
    gold draw, negative tuple, and discriminator pick."""
    label_count = pop.label_count
    if label_count > max_labels or K > max_k:
        raise EnumerationLimitError(
            f"|Y|={label_count}, K={K} exceed caps ({max_labels}, {max_k})")
    if not sampler.has_density:
        raise ConfigError(f"sampler {sampler.kind} has no enumerable density")
    gamma = np.zeros(label_count)
    row = pop.conditional(x)
    scores = scorer.score_all(x)
    for gold in range(label_count):
        pg = row[gold]
        if pg == 0.0:
            continue
        if K == 1:
            gamma[gold] += pg
            continue
        for negs, tprob in sampler.enumerate_tuples(scorer, x, gold, K - 1):
            labels = np.array((gold,) + tuple(negs), dtype=np.int64)
            pi = softmax(scores[labels])
            np.add.at(gamma, labels, pg * tprob * pi)
    return gamma


def gamma_heuristic(scorer, x) -> tuple[np.ndarray, np.ndarray]:
    """Cheap approximation gamma ~ p(y|x) exp(s(x,y)) / N(x), with the
    per-label boost delta(x,y) = exp(s(x,y)) / N(x) returned alongside."""
    scores = scorer.score_all(x)
    logp = log_softmax(scores)
    # N(x) = sum_y p(y|x) exp(s(x,y)) computed in the log domain
    log_terms = logp + scores
    shift = np.max(log_terms)
    log_n = shift + np.log(np.sum(np.exp(log_terms - shift)))
    gamma = np.exp(log_terms - log_n)
    delta = np.exp(scores - log_n)
    return gamma, delta


def bias_theorem1(scorer, pop, sampler, K,
                  max_labels=DEFAULT_MAX_LABELS, max_k=DEFAULT_MAX_K) -> BiasReport:
    """Closed-form bias from the exact selection probabilities."""
    eps = np.zeros((pop.input_count, pop.label_count))
    all_labels = np.arange(pop.label_count)
    xs, weights = [], []
    for x in range(pop.input_count):
        px = pop.input_marginal[x]
        if px == 0.0:
            continue
        p = model_distribution(scorer, x)
        g = gamma_exact(scorer, pop, sampler, x, K, max_labels=max_labels, max_k=max_k)
        eps[x] = p - g
        xs.append(x)
        weights.append(px * eps[x])
    bias = scorer.grad_weighted_batch(xs, [all_labels] * len(xs), weights)
    return BiasReport(bias, method="theorem1_formula", epsilon_table=eps)


def bias_direct(scorer, pop, sampler, K,
                max_labels=DEFAULT_MAX_LABELS, max_k=DEFAULT_MAX_K) -> BiasReport:
    """Independent oracle: exact cross-entropy gradient minus exact
    candidate-softmax gradient, both by enumeration."""
    ce = cross_entropy_exact(scorer, pop)
    hard = hard_nce_expected(scorer, pop, sampler, K,
                             max_labels=max_labels, max_k=max_k)
    return BiasReport(ce.gradient - hard.gradient, method="exact_enumeration")


def _simulated_gradient(scorer, xs, golds, sampler, K, rng):
    batch = []
    for x, gold in zip(xs, golds):
        negs = sampler.sample(scorer, int(x), int(gold), K - 1, rng)
        batch.append((int(x), CandidateTuple(int(gold), tuple(int(y) for y in negs))))
    loss = hard_nce_empirical(scorer, batch)
    return loss.value, loss.gradient


def bias_monte_carlo(scorer, pop, xs, golds, sampler, K, simulations, rng,
                     ce_gradient=None, n_threads=1) -> BiasReport:
    """Monte-Carlo bias estimate on a fixed data batch.

    Averages `simulations` independently sampled candidate-softmax gradients
    and subtracts the average from the exact cross-entropy gradient.  Each
    simulation owns an RNG stream spawned from `rng`; reduction is in
    simulation order.
    """
    if simulations < 1:
        raise ConfigError("need at least one simulation")
    if ce_gradient is None:
        ce_gradient = cross_entropy_exact(scorer, pop).gradient
    streams = rng.spawn(simulations)

    def one(stream):
        return _simulated_gradient(scorer, xs, golds, sampler, K, stream)

    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            results = list(pool.map(one, streams))
    else:
        results = [one(s) for s in streams]

    grad_sum = np.zeros(scorer.n_params)
    values = []
    for value, grad in results:
        grad_sum += grad
        values.append(value)
    bias = ce_gradient - grad_sum / simulations
    return BiasReport(bias, method=f"monte_carlo({simulations})",
                      simulation_values=values)
