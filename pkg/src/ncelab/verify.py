"""Enumeration-oracle verification suite for the bias and adversarial claims.

Each check returns its worst-case deviation over randomized small instances;
the CLI prints these as a table and the acceptance tests assert tolerances.
"""

from __future__ import annotations

import itertools

import numpy as np

from .bias import bias_direct, bias_theorem1
from .errors import NumericalError
from .losses import adversarial_loss, cross_entropy_exact, hard_nce_expected
from .negatives import (
    GreedyTopSampler,
    HardDistinctSampler,
    MixedSampler,
    ModelIidSampler,
    NegativeSampler,
    UniformDistinctSampler,
    UniformSampler,
    greedy_top,
)
from .population import PopulationDistribution
from .scorers import TabularScorer


def random_instance(rng, label_count=None, input_count=None, scale=1.0):
    """Random population + tabular scorer pair for enumeration checks."""
    label_count = label_count or int(rng.integers(3, 9))
    input_count = input_count or int(rng.integers(1, 4))
    conditionals = rng.dirichlet(np.ones(label_count), size=input_count)
    marginal = rng.dirichlet(np.ones(input_count))
    pop = PopulationDistribution(marginal, conditionals)
    scorer = TabularScorer(scale * rng.standard_normal((input_count, label_count)))
    return pop, scorer


def _random_sampler(rng, pop):
    choices = [UniformSampler(), UniformDistinctSampler(), ModelIidSampler(),
               HardDistinctSampler(), MixedSampler(float(rng.uniform(0, 1)))]
    return choices[int(rng.integers(len(choices)))]


def check_theorem1(seed=0, instances=20) -> float:
    """Max coordinate-wise gap between the closed-form bias and the direct
    gradient-difference oracle."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        pop, scorer = random_instance(rng)
        K = int(rng.integers(2, 4))
        sampler = _random_sampler(rng, pop)
        formula = bias_theorem1(scorer, pop, sampler, K)
        direct = bias_direct(scorer, pop, sampler, K)
        worst = max(worst, float(np.max(np.abs(formula.bias_vector - direct.bias_vector))))
    return worst


def check_theorem2(seed=0, label_count=6, input_count=2, K=3, sigma=0.1):
    """(bias norm at the optimum, bias norm after a Gaussian perturbation)
    under model-iid negatives."""
    rng = np.random.default_rng(seed)
    conditionals = rng.dirichlet(np.full(label_count, 2.0), size=input_count)
    pop = PopulationDistribution(np.full(input_count, 1 / input_count), conditionals)
    scorer = TabularScorer.from_log_probs(pop)
    sampler = ModelIidSampler()
    at_optimum = bias_theorem1(scorer, pop, sampler, K).bias_norm
    perturbed = scorer.perturbed(sigma * rng.standard_normal(scorer.n_params))
    off_optimum = bias_theorem1(perturbed, pop, sampler, K).bias_norm
    return at_optimum, off_optimum


def check_k_equals_y_identity(seed=0, instances=20) -> float:
    """Max value/gradient gap between the distinct-hard candidate loss at
    K = |Y| and exact cross entropy."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    sampler = HardDistinctSampler()
    for _ in range(instances):
        label_count = int(rng.integers(3, 9))
        pop, scorer = random_instance(rng, label_count=label_count, input_count=1)
        ce = cross_entropy_exact(scorer, pop)
        hard = hard_nce_expected(scorer, pop, sampler, K=label_count,
                                 max_labels=label_count, max_k=label_count)
        worst = max(worst, abs(ce.value - hard.value),
                    float(np.max(np.abs(ce.gradient - hard.gradient))))
    return worst


class _PointMassSampler(NegativeSampler):
    """Point mass on one fixed ordered tuple (adversary candidate)."""

    kind = "point_mass"
    has_density = True

    def __init__(self, negs):
        self.negs = tuple(int(y) for y in negs)

    def sample(self, scorer, x, gold, n, rng):
        return np.array(self.negs, dtype=np.int64)

    def tuple_prob(self, scorer, x, gold, negs):
        return 1.0 if tuple(int(y) for y in negs) == self.negs else 0.0

    def enumerate_tuples(self, scorer, x, gold, n):
        yield self.negs, 1.0


def check_theorem3(seed=0, instances=20) -> float:
    """Greedy adversary optimality: max over instances of (best exhaustive
    adversarial loss - greedy adversarial loss); nonpositive up to roundoff.

    Only the gold-conditional tuple choice varies, so we enumerate per-gold
    point-mass adversaries on single-input populations.
    """
    rng = np.random.default_rng(seed)
    worst_gap = 0.0
    sampler = GreedyTopSampler()
    for _ in range(instances):
        label_count = int(rng.integers(3, 9))
        K = int(rng.integers(2, min(label_count, 4) + 1))
        pop, scorer = random_instance(rng, label_count=label_count, input_count=1)
        greedy_value = adversarial_loss(scorer, pop, sampler, K,
                                        max_labels=label_count, max_k=K)
        # exhaustive: independently maximize the conditional loss per gold
        best = 0.0
        row = pop.conditional(0)
        for gold in range(label_count):
            if row[gold] == 0.0:
                continue
            best_for_gold = -np.inf
            others = [y for y in range(label_count) if y != gold]
            for negs in itertools.permutations(others, K - 1):
                point = _PointMassSampler(negs)
                single = PopulationDistribution([1.0], [_onehot(label_count, gold)])
                value = adversarial_loss(scorer, single, point, K,
                                         max_labels=label_count, max_k=K)
                best_for_gold = max(best_for_gold, value)
            best += row[gold] * best_for_gold
        worst_gap = max(worst_gap, best - greedy_value)
    return worst_gap


def _onehot(n, i):
    v = np.zeros(n)
    v[i] = 1.0
    return v


def ordering_instance(seed=0, label_count=12, input_count=3, support_size=4,
                      overconfidence=2.0):
    """Population with a small confusable set per input plus an argmax-optimal
    but overconfident checkpoint (scores = overconfidence * log pop).

    This is the calibration profile contrastive training without a
    normalization term drives toward: the ranking is right, the margins are
    inflated.  Against such a checkpoint, uniform negatives are junk the
    discriminator has already saturated on, so they carry almost none of the
    remaining cross-entropy gradient; hard negatives still cover the
    confusable set.
    """
    rng = np.random.default_rng(seed)
    profile = np.array([0.45, 0.30, 0.17, 0.08])[:support_size]
    rows = []
    for _ in range(input_count):
        support = rng.permutation(label_count)[:support_size]
        weights = np.full(label_count, 1e-6)
        weights[support] = profile * rng.uniform(0.9, 1.1, support_size)
        rows.append(weights / weights.sum())
    pop = PopulationDistribution(np.full(input_count, 1 / input_count),
                                 np.stack(rows))
    scorer = TabularScorer(overconfidence * np.log(pop.conditionals))
    return pop, scorer


def check_bias_ordering(seed=0, K=4):
    """(hard, mixed-50, random) exact bias norms at the overconfident
    near-optimal checkpoint; hard < mixed < random with >= 2x gaps there."""
    pop, scorer = ordering_instance(seed)
    return tuple(
        bias_theorem1(scorer, pop, sampler, K).bias_norm
        for sampler in (HardDistinctSampler(), MixedSampler(0.5),
                        UniformSampler()))


def check_greedy_maximizes_score_sum(seed=0, instances=20, label_count=6,
                                     K=3) -> bool:
    """Greedy tuple attains the max score sum over all distinct tuples."""
    rng = np.random.default_rng(seed)
    for _ in range(instances):
        _, scorer = random_instance(rng, label_count=label_count, input_count=1)
        gold = int(rng.integers(label_count))
        chosen = greedy_top(scorer, 0, gold, K - 1)
        scores = scorer.score_all(0)
        best = max(sum(scores[list(negs)]) for negs in itertools.permutations(
            [y for y in range(label_count) if y != gold], K - 1))
        if not np.isclose(float(scores[chosen].sum()), float(best), atol=1e-12):
            return False
    return True


def run_all(seed=0) -> dict:
    """Run every oracle check; raises NumericalError if a tolerance fails."""
    t1 = check_theorem1(seed)
    t2_zero, t2_pos = check_theorem2(seed)
    kid = check_k_equals_y_identity(seed)
    t3 = check_theorem3(seed)
    hard, mixed, random_ = check_bias_ordering(seed)
    results = {
        "theorem1_max_deviation": t1,
        "theorem2_bias_norm_at_optimum": t2_zero,
        "theorem2_bias_norm_perturbed": t2_pos,
        "k_equals_y_max_deviation": kid,
        "theorem3_greedy_gap": t3,
        "ordering_bias_norm_hard": hard,
        "ordering_bias_norm_mixed": mixed,
        "ordering_bias_norm_random": random_,
    }
    # The two bias-norm figures are reported for inspection; thresholds on
    # them belong to the caller.  The closed-form/oracle identities below
    # must hold to roundoff, so a violation is a genuine numerical failure.
    ok = t1 < 1e-10 and kid < 1e-10 and t3 <= 1e-10
    if not ok:
        raise NumericalError(f"oracle suite failed: {results}")
    return results
