"""End-to-end acceptance checks, one test per claim, each printing a single
PASS/FAIL line with the measured numbers.

Three checks encode claims the implementation does not satisfy, and they fail
honestly rather than being weakened:

* ``test_02``: with model-iid negatives the candidate-softmax gradient is NOT
  unbiased at scores = log population — duplicate candidates skew the
  selection probabilities (see ``test_bias.test_gamma_model_iid_not_unbiased_
  at_optimum`` for a two-label hand computation).  The uniform-negative
  variant IS unbiased there (``test_bias.test_gamma_uniform_negatives_
  unbiased_at_optimum``), so the claim fails for the stated sampler, not
  because of a bug in the bias machinery.
* ``test_05b`` / ``test_05c``: hard-negative training converges to its own
  fixed point, not to the cross-entropy optimum, so at its final iterate the
  gradient bias is not small relative to the random-negative run and the
  sampled loss estimate does not track exact cross entropy.  At the true
  optimum (scores = log population) the estimate is within 6% of exact cross
  entropy, so the mechanism is sound but unreachable by this training run.
"""

import time

import numpy as np
import pytest

from conftest import random_population
from ncelab.encoders import ARCHITECTURES
from ncelab.losses import (
    CandidateTuple,
    cross_entropy_exact,
    hard_nce_empirical,
    prior_corrected_loss,
)
from ncelab.negatives import HardDistinctSampler
from ncelab.numerics import softmax
from ncelab.population import PopulationDistribution
from ncelab.retrieval import (
    build_retriever,
    generate_toy_corpus,
    rank_all,
    recall_at_k,
)
from ncelab.scorers import MlpScorer, TabularScorer
from ncelab.training import ExperimentConfig, run_figure1, train_dataset
from ncelab.verify import (
    check_bias_ordering,
    check_k_equals_y_identity,
    check_theorem1,
    check_theorem2,
    check_theorem3,
)
from test_encoders import closed_form, make_encoder


def _line(tag, ok, detail):
    print(f"[{tag}] {'PASS' if ok else 'FAIL'} — {detail}")


def test_01_closed_form_bias_equals_direct_gradient_oracle():
    start = time.perf_counter()
    worst = check_theorem1(seed=0, instances=20)
    elapsed = time.perf_counter() - start
    ok = worst < 1e-10 and elapsed < 10.0
    _line("01 closed-form bias identity", ok,
          f"max coordinate deviation {worst:.3e} (tol 1e-10), {elapsed:.1f}s (< 10s)")
    assert worst < 1e-10
    assert elapsed < 10.0


def test_02_model_iid_negatives_unbiased_at_optimum():
    start = time.perf_counter()
    at_optimum, perturbed = check_theorem2(seed=0)
    elapsed = time.perf_counter() - start
    ok = at_optimum < 1e-10 and perturbed > 1e-6 and elapsed < 5.0
    _line("02 model-iid unbiasedness at optimum", ok,
          f"bias norm at optimum {at_optimum:.3e} (tol 1e-10), "
          f"perturbed {perturbed:.3e} (> 1e-6), {elapsed:.1f}s (< 5s)")
    assert elapsed < 5.0
    assert perturbed > 1e-6
    # Known failure: duplicate candidates make the selection distribution
    # differ from the model distribution even at scores = log population;
    # the measured norm is far above roundoff and is not a numerical artifact.
    assert at_optimum < 1e-10, (
        f"bias norm at the optimum is {at_optimum:.6f}, not roundoff: the "
        "model-iid sampler admits duplicates, whose selection weight skews "
        "gamma away from the model distribution (uniform iid negatives do "
        "satisfy this identity; see test_bias.py)")


def test_03_full_coverage_candidates_recover_cross_entropy():
    worst = check_k_equals_y_identity(seed=0, instances=20)
    ok = worst < 1e-10
    _line("03 K=|Y| identity", ok,
          f"max value/gradient deviation {worst:.3e} (tol 1e-10)")
    assert worst < 1e-10


def test_04_greedy_adversary_attains_exhaustive_maximum():
    gap = check_theorem3(seed=0, instances=20)
    ok = gap <= 1e-10
    _line("04 greedy adversary optimality", ok,
          f"worst exhaustive-minus-greedy gap {gap:.3e} (<= 1e-10)")
    assert gap <= 1e-10


# ---------------------------------------------------------------------------
# Desk-scale synthetic run: 1000 peaky labels, one-ReLU MLP, 128 samples per
# update, 4 negatives, 10 Monte-Carlo probe simulations; the same
# initialization trained once with hard and once with uniform negatives.


@pytest.fixture(scope="module")
def synthetic_run():
    start = time.perf_counter()
    trace_hard, trace_random = run_figure1(seed=0, steps=800,
                                           learning_rate=3e-3, probe_every=40)
    return trace_hard, trace_random, time.perf_counter() - start


def _final_probe(trace):
    return trace.probe_records()[-1]


def test_05a_random_negative_loss_collapses_below_exact_cross_entropy(synthetic_run):
    _, trace_random, elapsed = synthetic_run
    probe = _final_probe(trace_random)
    nce = float(np.nanmean([r.nce_estimate for r in trace_random.records[-40:]]))
    ok = nce < 0.05 and probe.ce_exact > 5 * nce and elapsed < 300.0
    _line("05a sampled-loss collapse", ok,
          f"final random-negative loss {nce:.4f} (< 0.05), exact CE "
          f"{probe.ce_exact:.3f} (> 5x), run {elapsed:.0f}s (< 300s)")
    assert elapsed < 300.0
    assert nce < 0.05
    assert probe.ce_exact > 5 * nce


def test_05b_hard_negative_bias_much_smaller_than_random(synthetic_run):
    trace_hard, trace_random, _ = synthetic_run
    hard = _final_probe(trace_hard).bias_norm_hard
    random_ = _final_probe(trace_random).bias_norm_random
    ok = hard < 0.1 * random_
    _line("05b final bias-norm ratio", ok,
          f"hard-run bias {hard:.3f} vs random-run bias {random_:.3f}, "
          f"ratio {hard / random_:.2f} (claimed < 0.1)")
    # Known failure: the hard-negative run settles at its own fixed point,
    # where its bias norm is comparable to (here larger than) the random
    # run's, under every pairing of checkpoints and probe samplers tried.
    assert hard < 0.1 * random_, (
        f"bias ratio is {hard / random_:.2f}, nowhere near 0.1: hard-negative "
        "training does not approach the cross-entropy optimum where its bias "
        "would vanish")


def test_05c_hard_negative_loss_tracks_exact_cross_entropy(synthetic_run):
    trace_hard, _, _ = synthetic_run
    probe = _final_probe(trace_hard)
    nce = float(np.nanmean([r.nce_estimate for r in trace_hard.records[-40:]]))
    rel = abs(nce - probe.ce_exact) / probe.ce_exact
    ok = rel < 0.10
    _line("05c sampled loss vs exact CE", ok,
          f"hard-negative loss {nce:.3f} vs exact CE {probe.ce_exact:.3f}, "
          f"relative gap {rel:.2f} (claimed < 0.10)")
    # Known failure: at the hard-run final iterate exact CE is ~1.6 while the
    # sampled loss is ~0.5.  At the true optimum (scores = log population)
    # the same estimator is within 6% of exact CE, so the gap reflects where
    # training converges, not a defect in the loss.
    assert rel < 0.10, (
        f"relative gap is {rel:.2f}: the hard-negative fixed point is far "
        "from the cross-entropy optimum, so the sampled loss does not track "
        "exact cross entropy there")


def test_06_bias_ordering_hard_below_mixed_below_random():
    hard, mixed, random_ = check_bias_ordering(seed=0)
    ok = hard < mixed < random_ and hard <= 0.5 * mixed and mixed <= 0.5 * random_
    _line("06 bias ordering at near-optimal checkpoint", ok,
          f"hard {hard:.2e} < mixed {mixed:.2e} < random {random_:.2e}, "
          f"adjacent ratios {hard / mixed:.3f}, {mixed / random_:.3f} (<= 0.5)")
    assert hard < mixed < random_
    assert hard <= 0.5 * mixed
    assert mixed <= 0.5 * random_


# ---------------------------------------------------------------------------
# Gradient correctness across every loss/scorer pairing.


def _fd4(f, theta, eps):
    """Fourth-order central difference (tight enough for roundoff-level tols)."""
    grad = np.zeros_like(theta)
    for i in range(theta.size):
        step = np.zeros_like(theta)
        step[i] = eps
        grad[i] = (f(theta - 2 * step) - 8 * f(theta - step)
                   + 8 * f(theta + step) - f(theta + 2 * step)) / (12 * eps)
    return grad


def _loss_suite(scorer, pop, rng):
    """(name, callable(scorer) -> LossValue) for every loss family."""
    xs = rng.integers(0, pop.input_count, size=6)
    tuples = []
    nus = []
    for x in xs:
        gold = int(rng.integers(pop.label_count))
        negs = [int(y) for y in rng.integers(0, pop.label_count, size=2)]
        tuples.append((int(x), CandidateTuple(gold, tuple(negs))))
        nus.append(np.full(2, 1.0 / pop.label_count))
    sampler = HardDistinctSampler()
    return [
        ("exact-ce", lambda s: cross_entropy_exact(s, pop)),
        ("candidate-softmax", lambda s: hard_nce_empirical(s, tuples)),
        ("proposal-corrected", lambda s: prior_corrected_loss(s, tuples, nus)),
    ]


def _rel_err(scorer, loss, fd):
    analytic = loss(scorer).gradient

    def f(theta):
        clone = scorer.copy()
        clone.set_params(theta)
        return loss(clone).value

    numeric = fd(f, scorer.get_params())
    return float(np.max(np.abs(numeric - analytic)) / np.max(np.abs(analytic)))


def test_07_gradients_match_finite_differences_for_every_scorer():
    start = time.perf_counter()
    rng = np.random.default_rng(0)
    worst = {}

    pop = random_population(rng, label_count=6, input_count=3)
    tabular = TabularScorer(0.7 * rng.standard_normal((3, 6)))
    worst["tabular"] = max(
        _rel_err(tabular, loss, lambda f, t: _fd4(f, t, 2e-3))
        for _, loss in _loss_suite(tabular, pop, rng))

    mlp = MlpScorer.init_random(3, 6, hidden=8, features="gaussian", seed=1)
    worst["mlp"] = max(
        _rel_err(mlp, loss, lambda f, t: _fd4(f, t, 1e-4))
        for _, loss in _loss_suite(mlp, pop, rng))

    corpus = generate_toy_corpus(vocab_size=15, entity_count=6, mention_count=12,
                                 length=4, corruption=0.3, seed=2)
    enc_pop = random_population(rng, label_count=6, input_count=12)
    worst["encoder"] = 0.0
    for arch in ARCHITECTURES:
        enc = build_retriever(corpus, arch, m_prime=3, hidden=6, seed=3)
        worst["encoder"] = max(
            worst["encoder"],
            max(_rel_err(enc, loss, lambda f, t: _fd4(f, t, 1e-4))
                for _, loss in _loss_suite(enc, enc_pop, rng)))

    elapsed = time.perf_counter() - start
    tols = {"tabular": 1e-10, "mlp": 1e-5, "encoder": 1e-4}
    ok = all(worst[k] < tols[k] for k in tols) and elapsed < 30.0
    _line("07 finite-difference gradients", ok,
          ", ".join(f"{k} {worst[k]:.2e} (tol {tols[k]:.0e})" for k in tols)
          + f", {elapsed:.1f}s (< 30s)")
    for kind, tol in tols.items():
        assert worst[kind] < tol, (kind, worst[kind])
    assert elapsed < 30.0


def test_08_unified_score_form_matches_all_closed_forms():
    rng = np.random.default_rng(0)
    worst = 0.0
    for arch in ARCHITECTURES:
        enc = make_encoder(arch, vocab=13, hidden=5, m_prime=3, seed=5)
        for _ in range(100):
            x = rng.integers(0, 13, size=rng.integers(3, 7))
            y = rng.integers(0, 13, size=rng.integers(3, 7))
            worst = max(worst, abs(enc.score(x, y) - closed_form(arch, enc, x, y)))
    ok = worst < 1e-10
    _line("08 unified score vs closed forms", ok,
          f"max deviation over 4 x 100 draws {worst:.3e} (tol 1e-10)")
    assert worst < 1e-10


RETRIEVAL_SCHEDULES = {
    # architecture -> (epochs, learning rate); slower-to-fit scorers get
    # longer schedules so every architecture is compared post-convergence
    "dual": (3, 0.05),
    "multi": (3, 0.05),
    "som": (12, 0.02),
    "poly": (16, 0.02),
}


def _retrieval_median(corpus, arch, sampler_kind, epochs, lr):
    recalls = []
    for seed in range(5):
        retriever = build_retriever(corpus, arch, m_prime=4, hidden=16, seed=seed)
        cfg = ExperimentConfig(
            scorer={"kind": "encoder", "arch": arch},
            negatives={"kind": sampler_kind, "p": 0.5},
            K=8, batch_size=32, epochs=epochs, learning_rate=lr, seed=seed)
        train_dataset(cfg, retriever, corpus.train_idx,
                      corpus.golds[corpus.train_idx])
        result = rank_all(retriever, corpus.val_idx, k_eval=64)
        recalls.append(recall_at_k(result, corpus.golds[corpus.val_idx]))
    return float(np.median(recalls))


def test_09_hard_and_mixed_negatives_match_or_beat_random_retrieval():
    start = time.perf_counter()
    corpus = generate_toy_corpus(vocab_size=50, entity_count=200,
                                 mention_count=800, length=8, corruption=0.3,
                                 seed=0)
    rows = {}
    for arch, (epochs, lr) in RETRIEVAL_SCHEDULES.items():
        rows[arch] = {
            kind: _retrieval_median(corpus, arch, kind, epochs, lr)
            for kind in ("uniform", "hard_distinct", "mixed")}
    elapsed = time.perf_counter() - start
    ok = all(r["hard_distinct"] >= r["uniform"] and r["mixed"] >= r["uniform"]
             for r in rows.values()) and elapsed < 900.0
    detail = "; ".join(
        f"{arch} random {r['uniform']:.3f} hard {r['hard_distinct']:.3f} "
        f"mixed {r['mixed']:.3f}" for arch, r in rows.items())
    _line("09 hard/mixed vs random recall@64", ok,
          detail + f"; {elapsed:.0f}s (< 900s)")
    for arch, r in rows.items():
        assert r["hard_distinct"] >= r["uniform"], (arch, r)
        assert r["mixed"] >= r["uniform"], (arch, r)
    assert elapsed < 900.0


def test_10_score_proportional_proposal_gives_unbiased_corrected_gradient():
    rng = np.random.default_rng(0)
    pop = random_population(rng, label_count=4, input_count=1)
    scorer = TabularScorer(rng.standard_normal((1, 4)))
    scores = scorer.score_all(0)
    ce = cross_entropy_exact(scorer, pop)
    expected = np.zeros(scorer.n_params)
    row = pop.conditional(0)
    for gold in range(4):
        others = [y for y in range(4) if y != gold]
        nu = softmax(scores[others])
        for j, neg in enumerate(others):
            loss = prior_corrected_loss(
                scorer, [(0, CandidateTuple(gold, (neg,)))], [nu[j:j + 1]])
            expected += row[gold] * nu[j] * loss.gradient
    dev = float(np.max(np.abs(expected - ce.gradient)))
    ok = dev < 1e-8
    _line("10 proposal-corrected gradient unbiasedness", ok,
          f"max deviation from exact-CE gradient {dev:.3e} (tol 1e-8)")
    assert dev < 1e-8
