"""Toy retrieval benchmark: corpus synthesis, recall metrics, and a
two-stage retrieve-then-rerank pipeline at desk scale.

Entities are random token sequences; each mention is a corrupted copy of its
gold entity (per-position token noise), which gives learnable but imperfect
string overlap between mention and entity.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .encoders import EncoderScorer, IndexedEncoderScorer, instantiate_named
from .scorers import ParameterLayout, Scorer


@dataclass
class ToyCorpus:
    entities: list
    mentions: list
    golds: np.ndarray
    vocab_size: int
    train_idx: np.ndarray
    val_idx: np.ndarray
    seed: int = 0

    @property
    def entity_count(self):
        return len(self.entities)

    @property
    def mention_count(self):
        return len(self.mentions)


def generate_toy_corpus(vocab_size=50, entity_count=200, mention_count=800,
                        length=8, corruption=0.3, seed=0,
                        val_fraction=0.2) -> ToyCorpus:
    if entity_count < 2:
        raise ConfigError("need at least 2 entities")
    if vocab_size < 2 or length < 1 or mention_count < 1:
        raise ConfigError("invalid corpus sizes")
    rng = np.random.default_rng(seed)
    entities = [rng.integers(0, vocab_size, size=length) for _ in range(entity_count)]
    golds = rng.integers(0, entity_count, size=mention_count)
    mentions = []
    for g in golds:
        m = entities[g].copy()
        noise = rng.random(length) < corruption
        m[noise] = rng.integers(0, vocab_size, size=int(noise.sum()))
        mentions.append(m)
    order = rng.permutation(mention_count)
    n_val = int(round(val_fraction * mention_count))
    return ToyCorpus(entities, mentions, golds.astype(np.int64), vocab_size,
                     train_idx=np.sort(order[n_val:]), val_idx=np.sort(order[:n_val]),
                     seed=seed)


@dataclass
class RetrievalResult:
    """Per-mention candidate rankings (full, score-descending, ties by lowest
    entity index) with an evaluation cutoff."""

    ranked: np.ndarray  # (n_mentions, n_entities) entity indices
    scores: np.ndarray  # scores aligned with `ranked`
    k_eval: int

    def rank_of_gold(self, golds) -> np.ndarray:
        """1-based rank of each mention's gold entity."""
        hits = self.ranked == np.asarray(golds)[:, None]
        return np.argmax(hits, axis=1) + 1


def rank_all(scorer, mention_indices=None, k_eval=64) -> RetrievalResult:
    """Score every entity for each mention and sort descending."""
    if mention_indices is None:
        mention_indices = range(scorer.input_count)
    ranked, scores = [], []
    for x in mention_indices:
        s = scorer.score_all(int(x))
        order = np.argsort(-s, kind="stable")
        ranked.append(order)
        scores.append(s[order])
    return RetrievalResult(np.stack(ranked), np.stack(scores),
                           k_eval=min(k_eval, len(ranked[0])))


def recall_at_k(result: RetrievalResult, golds, k=None) -> float:
    """Fraction of mentions whose gold appears in the top-k list."""
    k = result.k_eval if k is None else k
    if k > result.ranked.shape[1]:
        raise ConfigError("k exceeds the candidate count")
    golds = np.asarray(golds, dtype=np.int64)
    if golds.shape[0] != result.ranked.shape[0]:
        raise ConfigError("one gold per mention required")
    hits = (result.ranked[:, :k] == golds[:, None]).any(axis=1)
    return float(hits.mean())


def two_stage(retriever, reranker, golds, mention_indices=None,
              k_retrieve=64) -> float:
    """Unnormalized accuracy of retrieve-then-rerank: a mention whose gold
    misses retrieval counts as wrong."""
    if mention_indices is None:
        mention_indices = range(retriever.input_count)
    correct = 0
    total = 0
    golds = np.asarray(golds, dtype=np.int64)
    for i, x in enumerate(mention_indices):
        s = retriever.score_all(int(x))
        order = np.argsort(-s, kind="stable")[:k_retrieve]
        rerank_scores = np.array([reranker.score(int(x), int(y)) for y in order])
        best = order[int(np.argmax(rerank_scores))]
        correct += int(best == golds[i])
        total += 1
    return correct / total


def results_to_csv(path, result: RetrievalResult, golds, mention_ids=None):
    golds = np.asarray(golds, dtype=np.int64)
    ranks = result.rank_of_gold(golds)
    if mention_ids is None:
        mention_ids = range(len(golds))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mention_id", "gold", "rank_of_gold", "top1",
                         f"recall_hit@{result.k_eval}"])
        for i, (mid, gold, rank) in enumerate(zip(mention_ids, golds, ranks)):
            writer.writerow([mid, gold, rank, int(result.ranked[i, 0]),
                             int(rank <= result.k_eval)])


def build_retriever(corpus: ToyCorpus, architecture, m_prime=None, hidden=16,
                    seed=0, scale=0.2) -> IndexedEncoderScorer:
    if architecture in ("poly", "multi") and m_prime is None:
        m_prime = 4
    cfg = instantiate_named(architecture, m_prime)
    enc = EncoderScorer.init_random(corpus.vocab_size, hidden, cfg, seed=seed,
                                    scale=scale)
    return IndexedEncoderScorer(enc, corpus.mentions, corpus.entities)


class JointScorer(Scorer):
    """Toy cross-scoring reranker: mean-pooled embedding of the concatenated
    mention and entity sequences through one ReLU layer to a scalar score."""

    def __init__(self, emb, W1, b1, w, b, input_sequences, label_sequences):
        self.emb = np.array(emb, dtype=np.float64)
        self.W1 = np.array(W1, dtype=np.float64)
        self.b1 = np.array(b1, dtype=np.float64)
        self.w = np.array(w, dtype=np.float64)
        self.b = float(b)
        self.inputs = [np.asarray(s, dtype=np.int64) for s in input_sequences]
        self.labels = [np.asarray(s, dtype=np.int64) for s in label_sequences]
        self.input_count = len(self.inputs)
        self.label_count = len(self.labels)
        self.layout = ParameterLayout({
            "emb": self.emb.shape, "W1": self.W1.shape, "b1": self.b1.shape,
            "w": self.w.shape, "b": (1,)})

    @classmethod
    def init_random(cls, corpus: ToyCorpus, hidden=16, mlp_hidden=32, seed=0,
                    scale=0.3):
        rng = np.random.default_rng(seed)
        return cls(scale * rng.standard_normal((corpus.vocab_size, hidden)),
                   scale * rng.standard_normal((hidden, mlp_hidden)),
                   np.zeros(mlp_hidden),
                   scale * rng.standard_normal(mlp_hidden),
                   0.0, corpus.mentions, corpus.entities)

    def get_params(self):
        return self.layout.flatten({"emb": self.emb, "W1": self.W1, "b1": self.b1,
                                    "w": self.w, "b": np.array([self.b])})

    def set_params(self, theta):
        blocks = self.layout.unflatten(theta)
        self.emb = blocks["emb"].copy()
        self.W1 = blocks["W1"].copy()
        self.b1 = blocks["b1"].copy()
        self.w = blocks["w"].copy()
        self.b = float(blocks["b"][0])

    def copy(self):
        return JointScorer(self.emb, self.W1, self.b1, self.w, self.b,
                           self.inputs, self.labels)

    def _pool(self, x, y):
        tokens = np.concatenate([self.inputs[x], self.labels[y]])
        return self.emb[tokens].mean(axis=0), tokens

    def score(self, x, y):
        pool, _ = self._pool(x, int(y))
        h = np.maximum(pool @ self.W1 + self.b1, 0.0)
        return float(h @ self.w + self.b)

    def score_all(self, x):
        x_seq = self.inputs[x]
        mean_x = self.emb[x_seq].mean(axis=0)
        tx = len(x_seq)
        out = np.empty(self.label_count)
        for y, y_seq in enumerate(self.labels):
            pool = (tx * mean_x + len(y_seq) * self.emb[y_seq].mean(axis=0)) \
                / (tx + len(y_seq))
            h = np.maximum(pool @ self.W1 + self.b1, 0.0)
            out[y] = h @ self.w + self.b
        return out

    def grad_weighted(self, x, labels, weights):
        d_emb = np.zeros_like(self.emb)
        d_W1 = np.zeros_like(self.W1)
        d_b1 = np.zeros_like(self.b1)
        d_w = np.zeros_like(self.w)
        d_b = 0.0
        for y, wk in zip(labels, weights):
            pool, tokens = self._pool(x, int(y))
            pre = pool @ self.W1 + self.b1
            h = np.maximum(pre, 0.0)
            d_b += wk
            d_w += wk * h
            d_pre = (wk * self.w) * (pre > 0)
            d_W1 += np.outer(pool, d_pre)
            d_b1 += d_pre
            d_pool = self.W1 @ d_pre
            np.add.at(d_emb, tokens, d_pool / tokens.shape[0])
        return self.layout.flatten({"emb": d_emb, "W1": d_W1, "b1": d_b1,
                                    "w": d_w, "b": np.array([d_b])})
