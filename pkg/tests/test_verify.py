import numpy as np

from ncelab.scorers import model_distribution
from ncelab.verify import (
    check_bias_ordering,
    check_greedy_maximizes_score_sum,
    check_k_equals_y_identity,
    check_theorem1,
    check_theorem2,
    check_theorem3,
    ordering_instance,
    random_instance,
)


def test_random_instance_is_valid(rng):
    pop, scorer = random_instance(rng)
    assert pop.label_count == scorer.table.shape[1]
    assert pop.input_count == scorer.table.shape[0]
    assert np.allclose(pop.conditionals.sum(axis=1), 1.0, atol=1e-12)


def test_closed_form_bias_oracle_deviation_is_roundoff():
    assert check_theorem1(seed=1, instances=5) < 1e-10


def test_optimum_vs_perturbed_bias_structure():
    at_opt, perturbed = check_theorem2(seed=1)
    assert at_opt >= 0.0
    assert perturbed > 1e-6


def test_full_candidate_coverage_identity():
    assert check_k_equals_y_identity(seed=1, instances=3) < 1e-10


def test_greedy_adversary_attains_exhaustive_maximum():
    assert check_theorem3(seed=1, instances=5) <= 1e-10
    assert check_greedy_maximizes_score_sum(seed=1, instances=5)


def test_ordering_instance_shape():
    pop, scorer = ordering_instance(seed=3)
    assert np.allclose(pop.conditionals.sum(axis=1), 1.0, atol=1e-12)
    for x in range(pop.input_count):
        # the checkpoint ranks labels exactly as the population does
        assert np.array_equal(np.argsort(-scorer.score_all(x)),
                              np.argsort(-pop.conditional(x)))
        # but it is overconfident: more mass on the top label than the truth
        p = model_distribution(scorer, x)
        assert p.max() > pop.conditional(x).max()


def test_bias_ordering_holds_across_seeds():
    for seed in range(3):
        hard, mixed, rand = check_bias_ordering(seed=seed)
        assert hard < mixed < rand
