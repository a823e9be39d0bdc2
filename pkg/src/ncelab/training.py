"""Optimizers, training loops, and the scripted synthetic bias experiment.

Two training regimes:

* streaming -- fresh (input, gold) pairs are drawn from a synthetic
  population at every update and negatives are sampled against the current
  scorer (each update is its own refresh); this is the regime of the
  synthetic bias experiment.
* dataset -- a fixed list of (input, gold) examples is swept in epochs, and
  every example's negatives are refreshed once per epoch against a scorer
  snapshot.

Traces are emitted as CSV with a fixed header and a leading `# seed=N`
comment line.  Wall-clock milliseconds are recorded but are the one column
excluded from reproducibility comparisons.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bias import bias_monte_carlo
from .errors import ConfigError, NumericalError
from .losses import CandidateTuple, cross_entropy_exact, hard_nce_empirical
from .negatives import SamplerSpec, make_sampler, mixed_split
from .numerics import softmax
from .population import PopulationDistribution, SyntheticPopulationConfig, \
    build_synthetic_population, sample_pairs
from .scorers import MlpScorer

TRACE_HEADER = ["step", "epoch", "ce_exact", "nce_estimate",
                "bias_norm_hard", "bias_norm_random", "bias_norm_mixed", "wall_ms"]

PROBE_SAMPLERS = {
    "hard": SamplerSpec("hard_distinct"),
    "random": SamplerSpec("uniform"),
    "mixed": SamplerSpec("mixed", 0.5),
}


# ---------------------------------------------------------------------------
# optimizers
# ---------------------------------------------------------------------------

@dataclass
class OptimizerState:
    kind: str = "adam"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    m: np.ndarray | None = None
    v: np.ndarray | None = None
    step_count: int = 0

    def __post_init__(self):
        if self.kind not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer kind: {self.kind}")
        if not self.learning_rate >= 0:
            raise ConfigError("learning rate must be nonnegative")


def optimizer_step(state: OptimizerState, theta: np.ndarray,
                   gradient: np.ndarray) -> np.ndarray:
    """One SGD or bias-corrected Adam update; returns the new parameters."""
    gradient = np.asarray(gradient, dtype=np.float64)
    if gradient.shape != theta.shape:
        raise ConfigError("gradient/parameter dimension mismatch")
    if not np.all(np.isfinite(gradient)):
        raise NumericalError(f"non-finite gradient at step {state.step_count}")
    state.step_count += 1
    if state.kind == "sgd":
        return theta - state.learning_rate * gradient
    if state.m is None:
        state.m = np.zeros_like(theta)
        state.v = np.zeros_like(theta)
    state.m = state.beta1 * state.m + (1 - state.beta1) * gradient
    state.v = state.beta2 * state.v + (1 - state.beta2) * gradient**2
    m_hat = state.m / (1 - state.beta1**state.step_count)
    v_hat = state.v / (1 - state.beta2**state.step_count)
    return theta - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)


# ---------------------------------------------------------------------------
# configuration and traces
# ---------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    population: dict = field(default_factory=lambda: {
        "label_count": 1000, "input_count": 32, "peakiness": 8.0, "seed": 0})
    scorer: dict = field(default_factory=lambda: {"kind": "mlp", "hidden": 128})
    negatives: dict = field(default_factory=lambda: {"kind": "hard_distinct", "p": 0.5})
    K: int = 5
    batch_size: int = 128
    epochs: int = 1
    steps_per_epoch: int | None = None
    learning_rate: float = 1e-3
    learning_rate_grid: list | None = None
    optimizer: str = "adam"
    seed: int = 0
    trace_path: str | None = None
    probe_every: int = 10
    probe_simulations: int = 10
    threads: int = 1

    def __post_init__(self):
        if self.K < 2:
            raise ConfigError("K must be >= 2")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")

    @classmethod
    def from_json(cls, path):
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config not found: {path}")
        return cls(**json.loads(path.read_text()))

    def to_json(self):
        out = dict(self.__dict__)
        return json.dumps(out, indent=2)

    def sampler_spec(self) -> SamplerSpec:
        return SamplerSpec(self.negatives.get("kind", "hard_distinct"),
                           self.negatives.get("p", 0.5))


@dataclass
class TraceRecord:
    step: int
    epoch: int
    ce_exact: float
    nce_estimate: float
    bias_norm_hard: float = float("nan")
    bias_norm_random: float = float("nan")
    bias_norm_mixed: float = float("nan")
    wall_ms: float = 0.0
    refresh_version: int = 0  # scorer-snapshot id of the negatives in force


class ExperimentTrace:
    def __init__(self, seed: int):
        self.seed = seed
        self.records: list[TraceRecord] = []

    def append(self, record: TraceRecord):
        if self.records and record.step <= self.records[-1].step:
            raise ConfigError("trace steps must be strictly increasing")
        self.records.append(record)

    def probe_records(self):
        return [r for r in self.records if np.isfinite(r.bias_norm_hard)
                or np.isfinite(r.bias_norm_random)]

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])

    def to_csv(self, path):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(f"# seed={self.seed}\n")
            writer = csv.writer(fh)
            writer.writerow(TRACE_HEADER)
            for r in self.records:
                writer.writerow([r.step, r.epoch, repr(float(r.ce_exact)),
                                 repr(float(r.nce_estimate)),
                                 repr(float(r.bias_norm_hard)),
                                 repr(float(r.bias_norm_random)),
                                 repr(float(r.bias_norm_mixed)), f"{r.wall_ms:.3f}"])

    @classmethod
    def from_csv(cls, path):
        with open(path) as fh:
            first = fh.readline().strip()
            seed = int(first.split("=", 1)[1]) if first.startswith("# seed=") else -1
            reader = csv.DictReader(fh)
            trace = cls(seed)
            for row in reader:
                trace.append(TraceRecord(
                    int(row["step"]), int(row["epoch"]),
                    float(row["ce_exact"]), float(row["nce_estimate"]),
                    float(row["bias_norm_hard"]), float(row["bias_norm_random"]),
                    float(row["bias_norm_mixed"]), float(row["wall_ms"])))
        return trace


# ---------------------------------------------------------------------------
# batched negative sampling (fast paths for the streaming experiment)
# ---------------------------------------------------------------------------

def batch_negatives(scorer, xs, golds, n, spec: SamplerSpec, rng) -> np.ndarray:
    """(N, n) negatives for a batch, matching the per-example samplers."""
    xs = np.asarray(xs, dtype=np.int64)
    golds = np.asarray(golds, dtype=np.int64)
    label_count = scorer.label_count
    if spec.kind == "uniform":
        return rng.integers(0, label_count, size=(xs.shape[0], n))
    scores = (scorer.score_all_batch(xs) if hasattr(scorer, "score_all_batch")
              else np.stack([scorer.score_all(int(x)) for x in xs]))
    if spec.kind in ("hard_distinct", "mixed"):
        n_hard, n_rand = (n, 0) if spec.kind == "hard_distinct" \
            else mixed_split(n, spec.hard_fraction)
        out = np.empty((xs.shape[0], n), dtype=np.int64)
        keys = scores + rng.gumbel(size=scores.shape)
        keys[np.arange(xs.shape[0]), golds] = -np.inf
        if n_hard:
            part = np.argpartition(-keys, n_hard - 1, axis=1)[:, :n_hard]
            order = np.argsort(-np.take_along_axis(keys, part, axis=1), axis=1,
                               kind="stable")
            out[:, :n_hard] = np.take_along_axis(part, order, axis=1)
        for i in range(xs.shape[0]):
            if n_rand:
                taken = np.append(out[i, :n_hard], golds[i])
                remaining = np.setdiff1d(np.arange(label_count), taken)
                out[i, n_hard:] = rng.choice(remaining, size=n_rand, replace=False)
        return out
    if spec.kind == "model_iid":
        probs = softmax(scores, axis=1)
        cdf = np.cumsum(probs, axis=1)
        u = rng.random((xs.shape[0], n))
        out = np.empty((xs.shape[0], n), dtype=np.int64)
        for i in range(xs.shape[0]):
            out[i] = np.searchsorted(cdf[i], u[i], side="right")
        return np.minimum(out, label_count - 1)
    sampler = make_sampler(spec)
    return np.stack([sampler.sample(scorer, int(x), int(g), n, rng)
                     for x, g in zip(xs, golds)])


def _batch_to_tuples(xs, golds, negs):
    return [(int(x), CandidateTuple(int(g), tuple(int(y) for y in row)))
            for x, g, row in zip(xs, golds, negs)]


# ---------------------------------------------------------------------------
# training loops
# ---------------------------------------------------------------------------

def _probe(scorer, pop, xs, golds, train_spec, K, simulations, rng, threads=1):
    """Exact CE plus Monte-Carlo bias norms for the three reference samplers,
    with common random numbers across samplers (same spawned seed base)."""
    ce = cross_entropy_exact(scorer, pop)
    norms = {}
    for name, spec in PROBE_SAMPLERS.items():
        sampler = make_sampler(spec, pop)
        report = bias_monte_carlo(
            scorer, pop, xs, golds, sampler, K, simulations,
            np.random.default_rng(rng), ce_gradient=ce.gradient,
            n_threads=threads)
        norms[name] = report.bias_norm
        if spec.kind == train_spec.kind:
            norms["nce"] = float(np.mean(report.simulation_values))
    if "nce" not in norms:
        sampler = make_sampler(train_spec, pop)
        report = bias_monte_carlo(
            scorer, pop, xs, golds, sampler, K, simulations,
            np.random.default_rng(rng), ce_gradient=ce.gradient,
            n_threads=threads)
        norms["nce"] = float(np.mean(report.simulation_values))
    return ce.value, norms


def train_streaming(config: ExperimentConfig, pop=None, scorer=None):
    """Streaming regime: fresh population samples and fresh negatives at
    every update.  Returns (scorer, trace)."""
    if pop is None:
        pop = build_synthetic_population(SyntheticPopulationConfig(**config.population))
    if scorer is None:
        scorer = _build_scorer(config, pop)
    steps = (config.steps_per_epoch or 100) * config.epochs
    spec = config.sampler_spec()
    rng = np.random.default_rng(config.seed)
    probe_seed_rng = np.random.default_rng(config.seed + 1)
    state = OptimizerState(kind=config.optimizer, learning_rate=config.learning_rate)
    theta = scorer.get_params()
    trace = ExperimentTrace(config.seed)
    t0 = time.perf_counter()
    for step in range(1, steps + 1):
        xs, golds = sample_pairs(pop, config.batch_size, rng)
        negs = batch_negatives(scorer, xs, golds, config.K - 1, spec, rng)
        batch = _batch_to_tuples(xs, golds, negs)
        loss = hard_nce_empirical(scorer, batch)
        if not np.isfinite(loss.value):
            raise NumericalError(f"non-finite loss at step {step}; batch xs={xs[:8]}")
        theta = optimizer_step(state, theta, loss.gradient)
        if not np.all(np.isfinite(theta)):
            raise NumericalError(f"non-finite parameters at step {step}")
        scorer.set_params(theta)
        record = TraceRecord(step=step, epoch=step, ce_exact=float("nan"),
                             nce_estimate=loss.value, refresh_version=step)
        if step % config.probe_every == 0 or step == steps:
            probe_seed = int(probe_seed_rng.integers(2**63))
            ce_value, norms = _probe(scorer, pop, xs, golds, spec, config.K,
                                     config.probe_simulations, probe_seed,
                                     threads=config.threads)
            record.ce_exact = ce_value
            record.nce_estimate = norms["nce"]
            record.bias_norm_hard = norms["hard"]
            record.bias_norm_random = norms["random"]
            record.bias_norm_mixed = norms["mixed"]
        record.wall_ms = (time.perf_counter() - t0) * 1e3
        trace.append(record)
    if config.trace_path:
        trace.to_csv(config.trace_path)
    return scorer, trace


def train_dataset(config: ExperimentConfig, scorer, xs, golds, probes=False,
                  pop=None):
    """Fixed-dataset regime with epoch-wise negative refresh."""
    xs = np.asarray(xs, dtype=np.int64)
    golds = np.asarray(golds, dtype=np.int64)
    n = xs.shape[0]
    spec = config.sampler_spec()
    state = OptimizerState(kind=config.optimizer, learning_rate=config.learning_rate)
    theta = scorer.get_params()
    trace = ExperimentTrace(config.seed)
    rng = np.random.default_rng(config.seed)
    step = 0
    t0 = time.perf_counter()
    for epoch in range(1, config.epochs + 1):
        # refresh all negatives against the current scorer snapshot
        refresh_rng = np.random.default_rng((config.seed, epoch))
        negs = batch_negatives(scorer, xs, golds, config.K - 1, spec, refresh_rng)
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            batch = _batch_to_tuples(xs[idx], golds[idx], negs[idx])
            loss = hard_nce_empirical(scorer, batch)
            if not np.isfinite(loss.value):
                raise NumericalError(f"non-finite loss at step {step}; idx={idx[:8]}")
            theta = optimizer_step(state, theta, loss.gradient)
            if not np.all(np.isfinite(theta)):
                raise NumericalError(f"non-finite parameters at step {step}")
            scorer.set_params(theta)
            step += 1
            record = TraceRecord(step=step, epoch=epoch, ce_exact=float("nan"),
                                 nce_estimate=loss.value, refresh_version=epoch)
            if probes and pop is not None and step % config.probe_every == 0:
                ce_value, norms = _probe(scorer, pop, xs[idx], golds[idx], spec,
                                         config.K, config.probe_simulations,
                                         config.seed + step)
                record.ce_exact = ce_value
                record.bias_norm_hard = norms["hard"]
                record.bias_norm_random = norms["random"]
                record.bias_norm_mixed = norms["mixed"]
            record.wall_ms = (time.perf_counter() - t0) * 1e3
            trace.append(record)
    if config.trace_path:
        trace.to_csv(config.trace_path)
    return scorer, trace


def train(config: ExperimentConfig):
    """Config-driven entry point for the synthetic streaming experiment."""
    return train_streaming(config)


def _build_scorer(config: ExperimentConfig, pop: PopulationDistribution):
    kind = config.scorer.get("kind", "mlp")
    if kind == "mlp":
        return MlpScorer.init_random(
            pop.input_count, pop.label_count,
            hidden=config.scorer.get("hidden", 128),
            features=config.scorer.get("features", "onehot"),
            seed=config.seed,
            scale=config.scorer.get("init_scale", 0.1))
    if kind == "tabular":
        from .scorers import TabularScorer
        return TabularScorer.random(pop.input_count, pop.label_count, seed=config.seed)
    raise ConfigError(f"unknown scorer kind for synthetic training: {kind}")


def figure1_config(seed=0, sampler_kind="hard_distinct", steps=1200,
                   learning_rate=1e-3, probe_every=20,
                   trace_path=None) -> ExperimentConfig:
    """The synthetic regime: 1000 peaky labels, one-ReLU MLP, 128 samples per
    update, 4 negatives (K=5), 10 Monte-Carlo simulations per bias probe."""
    return ExperimentConfig(
        population={"label_count": 1000, "input_count": 32, "peakiness": 8.0,
                    "seed": seed},
        scorer={"kind": "mlp", "hidden": 128},
        negatives={"kind": sampler_kind, "p": 0.5},
        K=5, batch_size=128, epochs=1, steps_per_epoch=steps,
        learning_rate=learning_rate, optimizer="adam", seed=seed,
        trace_path=trace_path, probe_every=probe_every, probe_simulations=10)


def run_figure1(seed=0, steps=1200, learning_rate=1e-3, probe_every=20,
                out_dir=None):
    """Train the same initialization with hard vs random negatives and trace
    losses and bias norms.  Returns (trace_hard, trace_random)."""
    traces = {}
    for name, kind in (("hard", "hard_distinct"), ("random", "uniform")):
        path = None
        if out_dir is not None:
            path = str(Path(out_dir) / f"trace_{name}.csv")
        cfg = figure1_config(seed=seed, sampler_kind=kind, steps=steps,
                             learning_rate=learning_rate,
                             probe_every=probe_every, trace_path=path)
        _, trace = train_streaming(cfg)
        traces[name] = trace
    return traces["hard"], traces["random"]
