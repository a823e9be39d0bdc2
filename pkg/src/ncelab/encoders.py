"""Unified token-sequence score form and its named instantiations.

The score of a pair of token sequences is

    s(x, y) = 1_m^T Q_m^T K_m' Attn(K_m'^T Q_m)

where the direction choice assigns query/key roles to the two encodings, the
reduction choice shrinks the column counts (leftmost selection or learned
code attention), and Attn is column-wise soft or hard attention.  Choosing
these knobs recovers the dual encoder, poly-encoder, multi-vector encoder,
and sum-of-max (late interaction) encoder.

Encodings here are plain embedding lookups, which keeps every gradient exact
and runs fast; the algebra does not care how the encodings are produced.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .numerics import softmax
from .scorers import ParameterLayout, Scorer

X_TO_Y = "x_to_y"
Y_TO_X = "y_to_x"
LEFTMOST = "leftmost"
CODE_ATTENTION = "code_attention"
SOFT = "soft"
HARD = "hard"

ARCHITECTURES = ("dual", "poly", "multi", "som")


@dataclass(frozen=True)
class UnifiedScoreConfig:
    """Design choices generating one member of the architecture spectrum.

    ``query_m``/``key_m`` of None mean "keep all columns".
    """

    direction: str = X_TO_Y
    query_m: int | None = 1
    key_reduction: str = LEFTMOST
    key_m: int | None = 1
    attention: str = HARD

    def __post_init__(self):
        if self.direction not in (X_TO_Y, Y_TO_X):
            raise ConfigError(f"unknown direction: {self.direction}")
        if self.key_reduction not in (LEFTMOST, CODE_ATTENTION):
            raise ConfigError(f"unknown key reduction: {self.key_reduction}")
        if self.attention not in (SOFT, HARD):
            raise ConfigError(f"unknown attention: {self.attention}")
        for m in (self.query_m, self.key_m):
            if m is not None and m < 1:
                raise ConfigError("reduction sizes must be >= 1")
        if self.key_reduction == CODE_ATTENTION and self.key_m is None:
            raise ConfigError("code attention needs an explicit code count")


def instantiate_named(architecture: str, m_prime: int | None = None) -> UnifiedScoreConfig:
    """Named architecture -> design-choice tuple."""
    if architecture == "dual":
        return UnifiedScoreConfig(X_TO_Y, 1, LEFTMOST, 1, HARD)
    if architecture == "poly":
        if m_prime is None:
            raise ConfigError("poly requires a code count m'")
        return UnifiedScoreConfig(Y_TO_X, 1, CODE_ATTENTION, m_prime, SOFT)
    if architecture == "multi":
        if m_prime is None:
            raise ConfigError("multi requires a key count m'")
        return UnifiedScoreConfig(X_TO_Y, 1, LEFTMOST, m_prime, HARD)
    if architecture == "som":
        return UnifiedScoreConfig(X_TO_Y, None, LEFTMOST, None, HARD)
    raise ConfigError(f"unknown architecture: {architecture}")


def _col_softmax(a):
    return softmax(a, axis=0)


def unified_score(Q: np.ndarray, K: np.ndarray, attention: str) -> float:
    """Score already-reduced query/key matrices (H x m and H x m')."""
    s = 0.0
    for t in range(Q.shape[1]):
        a = K.T @ Q[:, t]
        if attention == HARD:
            s += a[int(np.argmax(a))]
        else:
            w = softmax(a)
            s += float(a @ w)
    return float(s)


class EncoderScorer:
    """Embedding-lookup encoder pair evaluated through the unified score form.

    Parameters are the two token-embedding tables (and code embeddings when
    the key reduction is code attention), exposed as one flat vector.
    """

    def __init__(self, emb_x, emb_y, config: UnifiedScoreConfig, codes=None):
        self.emb_x = np.array(emb_x, dtype=np.float64)
        self.emb_y = np.array(emb_y, dtype=np.float64)
        self.config = config
        if self.emb_x.shape[1] != self.emb_y.shape[1]:
            raise ConfigError("embedding widths must match")
        if config.key_reduction == CODE_ATTENTION:
            if codes is None:
                raise ConfigError("code attention requires code embeddings")
            self.codes = np.array(codes, dtype=np.float64)
            if self.codes.shape != (self.emb_x.shape[1], config.key_m):
                raise ConfigError("codes must be H x m'")
        else:
            self.codes = None
        shapes = {"emb_x": self.emb_x.shape, "emb_y": self.emb_y.shape}
        if self.codes is not None:
            shapes["codes"] = self.codes.shape
        self.layout = ParameterLayout(shapes)
        self.version = 0

    @classmethod
    def init_random(cls, vocab_size, hidden, config, seed=0, scale=0.5):
        rng = np.random.default_rng(seed)
        codes = None
        if config.key_reduction == CODE_ATTENTION:
            codes = scale * rng.standard_normal((hidden, config.key_m))
        return cls(
            scale * rng.standard_normal((vocab_size, hidden)),
            scale * rng.standard_normal((vocab_size, hidden)),
            config,
            codes=codes,
        )

    @property
    def hidden(self):
        return self.emb_x.shape[1]

    @property
    def n_params(self):
        return self.layout.size

    def get_params(self):
        blocks = {"emb_x": self.emb_x, "emb_y": self.emb_y}
        if self.codes is not None:
            blocks["codes"] = self.codes
        return self.layout.flatten(blocks)

    def set_params(self, theta):
        blocks = self.layout.unflatten(theta)
        self.emb_x = blocks["emb_x"].copy()
        self.emb_y = blocks["emb_y"].copy()
        if self.codes is not None:
            self.codes = blocks["codes"].copy()
        self.version += 1

    def copy(self):
        return EncoderScorer(self.emb_x, self.emb_y, self.config, codes=self.codes)

    def encode_x(self, x_tokens):
        """H x T matrix of the input sequence's token embeddings."""
        return self.emb_x[np.asarray(x_tokens, dtype=np.int64)].T

    def encode_y(self, y_tokens):
        return self.emb_y[np.asarray(y_tokens, dtype=np.int64)].T

    def _roles(self, x_tokens, y_tokens):
        E = self.encode_x(x_tokens)
        F = self.encode_y(y_tokens)
        if self.config.direction == X_TO_Y:
            return E, F
        return F, E

    def _reduce(self, Qf, Kf):
        cfg = self.config
        m = cfg.query_m
        if m is not None and m > Qf.shape[1]:
            raise ConfigError(f"query reduction {m} exceeds sequence length {Qf.shape[1]}")
        Q = Qf if m is None else Qf[:, :m]
        if cfg.key_reduction == LEFTMOST:
            mp = cfg.key_m
            if mp is not None and mp > Kf.shape[1]:
                raise ConfigError(f"key reduction {mp} exceeds sequence length {Kf.shape[1]}")
            K = Kf if mp is None else Kf[:, :mp]
            P = None
        else:
            P = _col_softmax(Kf.T @ self.codes)
            K = Kf @ P
        return Q, K, P

    def score(self, x_tokens, y_tokens) -> float:
        if len(x_tokens) == 0 or len(y_tokens) == 0:
            raise ConfigError("token sequences must be nonempty")
        Qf, Kf = self._roles(x_tokens, y_tokens)
        Q, K, _ = self._reduce(Qf, Kf)
        return unified_score(Q, K, self.config.attention)

    def grad_score(self, x_tokens, y_tokens) -> np.ndarray:
        """Analytic gradient wrt all parameters.  Hard-attention argmax is
        treated as locally constant (valid away from ties)."""
        cfg = self.config
        Qf, Kf = self._roles(x_tokens, y_tokens)
        Q, K, P = self._reduce(Qf, Kf)

        dQ = np.zeros_like(Q)
        dK = np.zeros_like(K)
        for t in range(Q.shape[1]):
            q = Q[:, t]
            a = K.T @ q
            if cfg.attention == HARD:
                j = int(np.argmax(a))
                dQ[:, t] += K[:, j]
                dK[:, j] += q
            else:
                w = softmax(a)
                g_a = w * (1.0 + a - float(a @ w))
                dQ[:, t] += K @ g_a
                dK += np.outer(q, g_a)

        dQf = np.zeros_like(Qf)
        dQf[:, : dQ.shape[1]] = dQ
        dKf = np.zeros_like(Kf)
        d_codes = None
        if cfg.key_reduction == LEFTMOST:
            dKf[:, : dK.shape[1]] = dK
        else:
            # K = Kf P with P = colsoftmax(Kf^T codes)
            dKf += dK @ P.T
            dP = Kf.T @ dK
            dA = P * (dP - np.sum(P * dP, axis=0, keepdims=True))
            dKf += self.codes @ dA.T
            d_codes = Kf @ dA

        if cfg.direction == X_TO_Y:
            dE, dF = dQf, dKf
        else:
            dE, dF = dKf, dQf

        g_emb_x = np.zeros_like(self.emb_x)
        g_emb_y = np.zeros_like(self.emb_y)
        np.add.at(g_emb_x, np.asarray(x_tokens, dtype=np.int64), dE.T)
        np.add.at(g_emb_y, np.asarray(y_tokens, dtype=np.int64), dF.T)
        blocks = {"emb_x": g_emb_x, "emb_y": g_emb_y}
        if self.codes is not None:
            blocks["codes"] = d_codes if d_codes is not None else np.zeros_like(self.codes)
        return self.layout.flatten(blocks)


class IndexedEncoderScorer(Scorer):
    """Adapter giving an EncoderScorer the indexed-scorer interface over a
    fixed list of input sequences and label sequences.

    Scoring all labels for one input is vectorized for the four named
    architectures; other configs fall back to a per-label loop.
    """

    def __init__(self, encoder: EncoderScorer, input_sequences, label_sequences):
        self.encoder = encoder
        self.inputs = [np.asarray(s, dtype=np.int64) for s in input_sequences]
        self.labels = [np.asarray(s, dtype=np.int64) for s in label_sequences]
        if any(len(s) == 0 for s in self.inputs) or any(len(s) == 0 for s in self.labels):
            raise ConfigError("sequences must be nonempty")
        self.input_count = len(self.inputs)
        self.label_count = len(self.labels)
        self.layout = encoder.layout
        self._cache_version = -1
        self._cache = {}

    def get_params(self):
        return self.encoder.get_params()

    def set_params(self, theta):
        self.encoder.set_params(theta)

    def copy(self):
        return IndexedEncoderScorer(self.encoder.copy(), self.inputs, self.labels)

    def score(self, x, y):
        return self.encoder.score(self.inputs[x], self.labels[y])

    def grad_score(self, x, y):
        return self.encoder.grad_score(self.inputs[x], self.labels[y])

    def grad_weighted(self, x, labels, weights):
        g = np.zeros(self.n_params)
        for y, w in zip(labels, weights):
            g += w * self.encoder.grad_score(self.inputs[x], self.labels[int(y)])
        return g

    def _label_tensors(self):
        if self._cache_version != self.encoder.version:
            self._cache = {}
            self._cache_version = self.encoder.version
        return self._cache

    def score_all(self, x):
        cfg = self.encoder.config
        cache = self._label_tensors()
        x_seq = self.inputs[x]
        named = self._named_architecture()
        if named == "dual":
            if "F1" not in cache:
                cache["F1"] = np.stack([self.encoder.emb_y[s[0]] for s in self.labels])
            q = self.encoder.emb_x[x_seq[0]]
            return cache["F1"] @ q
        if named == "multi":
            mp = cfg.key_m
            if "Flead" not in cache:
                cache["Flead"] = np.stack(
                    [self.encoder.emb_y[s[:mp]] for s in self.labels]
                )  # (n, m', H); assumes equal lengths >= m'
            q = self.encoder.emb_x[x_seq[0]]
            return np.max(cache["Flead"] @ q, axis=1)
        if named == "som":
            if "Fall" not in cache:
                cache["Fall"] = np.stack([self.encoder.emb_y[s] for s in self.labels])
            Q = self.encoder.emb_x[x_seq]  # (T, H)
            sims = np.einsum("nph,th->ntp", cache["Fall"], Q)
            return sims.max(axis=2).sum(axis=1)
        if named == "poly":
            if "F1" not in cache:
                cache["F1"] = np.stack([self.encoder.emb_y[s[0]] for s in self.labels])
            Kf = self.encoder.encode_x(x_seq)
            P = _col_softmax(Kf.T @ self.encoder.codes)
            K = Kf @ P  # (H, m')
            A = cache["F1"] @ K  # (n, m')
            W = softmax(A, axis=1)
            return np.sum(A * W, axis=1)
        return np.array([self.score(x, y) for y in range(self.label_count)])

    def _named_architecture(self):
        cfg = self.encoder.config
        if cfg.direction == X_TO_Y and cfg.key_reduction == LEFTMOST:
            if cfg.query_m == 1 and cfg.key_m == 1:
                return "dual"
            if cfg.query_m == 1 and cfg.key_m is not None and cfg.attention == HARD:
                if all(len(s) >= cfg.key_m for s in self.labels):
                    return "multi"
            if cfg.query_m is None and cfg.key_m is None and cfg.attention == HARD:
                lens = {len(s) for s in self.labels}
                if len(lens) == 1:
                    return "som"
        if (
            cfg.direction == Y_TO_X
            and cfg.query_m == 1
            and cfg.key_reduction == CODE_ATTENTION
            and cfg.attention == SOFT
        ):
            return "poly"
        return None
