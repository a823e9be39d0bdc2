"""Loss functionals and their exact gradients.

Everything reduces to softmax negative log-likelihoods over candidate scores,
so every gradient is a weighted sum of score gradients with weights
(softmax - onehot), accumulated via the scorers' ``grad_weighted`` primitive
in deterministic index order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EnumerationLimitError
from .numerics import log_softmax, softmax
from .scorers import model_distribution

DEFAULT_ENUM_ENTRIES = 10**7
DEFAULT_MAX_LABELS = 12
DEFAULT_MAX_K = 4


@dataclass(frozen=True)
class CandidateTuple:
    """Gold label followed by ordered negatives; K counts all candidates."""

    gold: int
    negatives: tuple[int, ...]

    def __post_init__(self):
        if len(self.negatives) < 1:
            raise ConfigError("candidate tuple needs K >= 2")

    @property
    def K(self) -> int:
        return 1 + len(self.negatives)

    def labels(self) -> np.ndarray:
        return np.array((self.gold,) + tuple(self.negatives), dtype=np.int64)


@dataclass
class LossValue:
    value: float
    gradient: np.ndarray | None = None


def nce_discriminator(scorer, x, tup: CandidateTuple) -> np.ndarray:
    """Softmax over the K candidate scores."""
    labels = tup.labels()
    scores = scorer.score_all(x)[labels]
    return softmax(scores)


def cross_entropy_exact(scorer, pop, with_gradient=True,
                        max_entries=DEFAULT_ENUM_ENTRIES) -> LossValue:
    """Full-enumeration cross entropy and gradient over the population."""
    n_entries = pop.input_count * pop.label_count
    if n_entries > max_entries:
        raise EnumerationLimitError(
            f"{n_entries} table entries exceed the enumeration cap {max_entries}")
    value = 0.0
    xs, weights_list, labels = [], [], None
    all_labels = np.arange(pop.label_count)
    grads = []
    for x in range(pop.input_count):
        px = pop.input_marginal[x]
        if px == 0.0:
            continue
        logp = log_softmax(scorer.score_all(x))
        row = pop.conditional(x)
        value += px * float(-(row @ logp))
        if with_gradient:
            p = np.exp(logp)
            xs.append(x)
            weights_list.append(px * (p - row))
    gradient = None
    if with_gradient:
        gradient = scorer.grad_weighted_batch(xs, [all_labels] * len(xs), weights_list)
    return LossValue(value, gradient)


def hard_nce_empirical(scorer, batch, with_gradient=True) -> LossValue:
    """Mean candidate-softmax NLL over a batch of (x, CandidateTuple)."""
    if len(batch) == 0:
        raise ConfigError("empty batch")
    n = len(batch)
    value = 0.0
    xs, labels_list, weights_list = [], [], []
    for x, tup in batch:
        labels = tup.labels()
        logpi = log_softmax(scorer.score_all(x)[labels])
        value += -float(logpi[0]) / n
        if with_gradient:
            w = np.exp(logpi)
            w[0] -= 1.0
            xs.append(x)
            labels_list.append(labels)
            weights_list.append(w / n)
    gradient = None
    if with_gradient:
        gradient = scorer.grad_weighted_batch(xs, labels_list, weights_list)
    return LossValue(value, gradient)


def hard_nce_expected(scorer, pop, sampler, K, with_gradient=True,
                      max_labels=DEFAULT_MAX_LABELS, max_k=DEFAULT_MAX_K) -> LossValue:
    """Exact expectation of the candidate-softmax NLL: enumerate
    (x, gold) over the population and ordered negative tuples over the
    sampler's closed-form density."""
    if K < 2:
        raise ConfigError("K must be >= 2")
    if pop.label_count > max_labels or K > max_k:
        raise EnumerationLimitError(
            f"|Y|={pop.label_count}, K={K} exceed caps ({max_labels}, {max_k})")
    if not sampler.has_density:
        raise ConfigError(f"sampler {sampler.kind} has no enumerable density")
    value = 0.0
    gradient = np.zeros(scorer.n_params) if with_gradient else None
    for x in range(pop.input_count):
        px = pop.input_marginal[x]
        if px == 0.0:
            continue
        row = pop.conditional(x)
        for gold in range(pop.label_count):
            pxy = px * row[gold]
            if pxy == 0.0:
                continue
            for negs, tprob in sampler.enumerate_tuples(scorer, x, gold, K - 1):
                weight = pxy * tprob
                tup = CandidateTuple(gold, tuple(negs))
                labels = tup.labels()
                logpi = log_softmax(scorer.score_all(x)[labels])
                value += weight * -float(logpi[0])
                if with_gradient:
                    w = np.exp(logpi)
                    w[0] -= 1.0
                    gradient += weight * scorer.grad_weighted(x, labels, w)
    return LossValue(value, gradient)


def prior_corrected_loss(scorer, batch, nu_densities, with_gradient=True) -> LossValue:
    """Candidate-softmax NLL with proposal-corrected negative scores.

    Each negative's score is shifted by -log((K-1) * nu) where nu is its
    probability under the iid proposal that produced it; the proposal values
    are treated as constants of the gradient.
    """
    if len(batch) == 0:
        raise ConfigError("empty batch")
    if len(nu_densities) != len(batch):
        raise ConfigError("one proposal-probability vector per example required")
    n = len(batch)
    value = 0.0
    xs, labels_list, weights_list = [], [], []
    for (x, tup), nu in zip(batch, nu_densities):
        nu = np.asarray(nu, dtype=np.float64)
        if nu.shape != (len(tup.negatives),):
            raise ConfigError("proposal probabilities must cover exactly the negatives")
        if np.any(nu <= 0.0):
            raise ConfigError("proposal probabilities must be strictly positive")
        labels = tup.labels()
        adjusted = scorer.score_all(x)[labels].astype(np.float64)
        adjusted[1:] -= np.log((tup.K - 1) * nu)
        logpi = log_softmax(adjusted)
        value += -float(logpi[0]) / n
        if with_gradient:
            w = np.exp(logpi)
            w[0] -= 1.0
            xs.append(x)
            labels_list.append(labels)
            weights_list.append(w / n)
    gradient = None
    if with_gradient:
        gradient = scorer.grad_weighted_batch(xs, labels_list, weights_list)
    return LossValue(value, gradient)


def adversarial_loss(scorer, pop, sampler, K,
                     max_labels=DEFAULT_MAX_LABELS, max_k=DEFAULT_MAX_K) -> float:
    """Exact candidate-softmax NLL under an arbitrary enumerable negative
    distribution (the adversary's choice)."""
    return hard_nce_expected(scorer, pop, sampler, K, with_gradient=False,
                             max_labels=max_labels, max_k=max_k).value
