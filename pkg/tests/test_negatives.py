import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_tabular
from ncelab.errors import ConfigError
from ncelab.negatives import (
    GreedyTopSampler,
    HardDistinctSampler,
    MarginalSampler,
    MixedSampler,
    ModelIidSampler,
    SamplerSpec,
    UniformDistinctSampler,
    UniformSampler,
    greedy_top,
    make_sampler,
    mixed_split,
    sample_hard_distinct,
    sample_mixed,
    sample_uniform,
)
from ncelab.population import PopulationDistribution
from ncelab.scorers import TabularScorer, model_distribution

DENSITY_SAMPLERS = [
    UniformSampler(),
    UniformDistinctSampler(),
    ModelIidSampler(),
    HardDistinctSampler(),
    GreedyTopSampler(),
    MixedSampler(0.5),
]


@pytest.mark.parametrize("sampler", DENSITY_SAMPLERS, ids=lambda s: s.kind)
def test_enumerated_densities_sum_to_one(sampler, rng):
    scorer = random_tabular(rng, label_count=5, input_count=1)
    total = sum(prob for _, prob in sampler.enumerate_tuples(scorer, 0, gold=2, n=2))
    assert abs(total - 1.0) < 1e-12


@pytest.mark.parametrize("sampler", DENSITY_SAMPLERS, ids=lambda s: s.kind)
def test_sampling_frequencies_match_density(sampler, rng):
    scorer = random_tabular(rng, label_count=4, input_count=1)
    gold, n, draws = 1, 2, 20_000
    probs = dict(sampler.enumerate_tuples(scorer, 0, gold, n))
    counts = {t: 0 for t in probs}
    for _ in range(draws):
        t = tuple(int(y) for y in sampler.sample(scorer, 0, gold, n, rng))
        assert t in probs, f"drew tuple outside enumerated support: {t}"
        counts[t] += 1
    for t, p in probs.items():
        sigma = np.sqrt(p * (1 - p) / draws)
        assert abs(counts[t] / draws - p) < 4.5 * sigma + 1e-3


def test_gumbel_topk_matches_sequential_density(rng):
    # the without-replacement sampler must realize exactly the sequential
    # renormalized density it reports
    scorer = random_tabular(rng, label_count=5, input_count=1, scale=1.5)
    sampler = HardDistinctSampler()
    probs = dict(sampler.enumerate_tuples(scorer, 0, gold=0, n=3))
    draws = 30_000
    counts = {t: 0 for t in probs}
    for _ in range(draws):
        t = tuple(int(y) for y in sampler.sample(scorer, 0, 0, 3, rng))
        counts[t] += 1
    for t, p in probs.items():
        sigma = np.sqrt(p * (1 - p) / draws)
        assert abs(counts[t] / draws - p) < 4.5 * sigma + 1e-3


def test_hard_distinct_dfs_matches_tuple_prob(rng):
    scorer = random_tabular(rng, label_count=6, input_count=1)
    sampler = HardDistinctSampler()
    for negs, prob in sampler.enumerate_tuples(scorer, 0, gold=3, n=2):
        assert abs(prob - sampler.tuple_prob(scorer, 0, 3, negs)) < 1e-13


def test_uniform_allows_gold_and_duplicates(rng):
    pool = np.arange(3)
    seen = set()
    for _ in range(300):
        draw = sample_uniform(pool, gold=0, n=2, rng=rng)
        seen.add(tuple(int(y) for y in draw))
    assert (0, 0) in seen  # gold and duplicate both permitted


def test_distinct_draws_exclude_gold_and_duplicates(rng):
    scorer = random_tabular(rng, label_count=6, input_count=1)
    for _ in range(200):
        negs = sample_hard_distinct(scorer, 0, gold=2, n=4, rng=rng)
        assert 2 not in negs
        assert len(set(int(y) for y in negs)) == 4


def test_distinct_pool_too_small(rng):
    scorer = random_tabular(rng, label_count=3, input_count=1)
    with pytest.raises(ConfigError):
        sample_hard_distinct(scorer, 0, gold=0, n=3, rng=rng)
    with pytest.raises(ConfigError):
        sample_uniform(np.arange(3), gold=0, n=3, rng=rng, distinct=True)


def test_greedy_top_is_score_ordered(rng):
    table = np.array([[0.1, 3.0, -1.0, 2.0, 0.5]])
    scorer = TabularScorer(table)
    assert list(greedy_top(scorer, 0, gold=1, n=3)) == [3, 4, 0]
    assert list(greedy_top(scorer, 0, gold=2, n=2)) == [1, 3]


@given(n=st.integers(1, 12), p=st.floats(0.0, 1.0))
def test_mixed_split_partitions(n, p):
    n_hard, n_rand = mixed_split(n, p)
    assert n_hard + n_rand == n
    assert 0 <= n_hard <= n


def test_mixed_split_rounds_half_up():
    assert mixed_split(4, 0.5) == (2, 2)
    assert mixed_split(3, 0.5) == (2, 1)
    assert mixed_split(4, 0.0) == (0, 4)
    assert mixed_split(4, 1.0) == (4, 0)


def test_mixed_tuple_is_duplicate_free(rng):
    scorer = random_tabular(rng, label_count=8, input_count=1)
    for _ in range(100):
        negs = sample_mixed(scorer, 0, gold=5, n=5, p=0.5, rng=rng)
        assert 5 not in negs
        assert len(set(int(y) for y in negs)) == 5


def test_model_iid_frequency_matches_model(rng):
    scorer = random_tabular(rng, label_count=5, input_count=1)
    sampler = ModelIidSampler()
    draws = sampler.sample(scorer, 0, gold=0, n=30_000, rng=rng)
    freq = np.bincount(draws, minlength=5) / draws.shape[0]
    p = model_distribution(scorer, 0)
    assert np.max(np.abs(freq - p)) < 0.015


def test_marginal_sampler_uses_population_marginal(rng):
    pop = PopulationDistribution([0.5, 0.5], [[0.9, 0.1, 0.0], [0.1, 0.1, 0.8]])
    sampler = MarginalSampler(pop)
    assert np.allclose(sampler.weights, [0.5, 0.1, 0.4], atol=1e-12)
    assert abs(sampler.tuple_prob(None, 0, 0, [0, 2]) - 0.2) < 1e-12


def test_make_sampler_and_spec_validation():
    assert make_sampler(SamplerSpec("uniform")).kind == "uniform"
    assert make_sampler(SamplerSpec("mixed", 0.25)).hard_fraction == 0.25
    with pytest.raises(ConfigError):
        SamplerSpec("nearest_neighbor")
    with pytest.raises(ConfigError):
        SamplerSpec("mixed", 1.5)
    with pytest.raises(ConfigError):
        make_sampler(SamplerSpec("marginal"))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), gold=st.integers(0, 4), n=st.integers(1, 3))
def test_hard_density_support_property(seed, gold, n):
    rng = np.random.default_rng(seed)
    scorer = random_tabular(rng, label_count=5, input_count=1)
    sampler = HardDistinctSampler()
    negs = sampler.sample(scorer, 0, gold, n, rng)
    prob = sampler.tuple_prob(scorer, 0, gold, negs)
    assert prob > 0.0
    # density vanishes on gold hits and duplicates
    assert sampler.tuple_prob(scorer, 0, gold, [gold] + [int(y) for y in negs[1:]]) == 0.0
    if n >= 2:
        dup = [int(negs[0])] * n
        assert sampler.tuple_prob(scorer, 0, gold, dup) == 0.0
