"""Command-line driver.

Subcommands: synth-bias, verify-theorems, train-retriever, eval-recall,
rerank, dump-config.  Exit codes: 0 success, 1 configuration error,
2 numerical failure.  Report paths render matplotlib figures next to the
delimited output.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .encoders import ARCHITECTURES, instantiate_named
from .errors import ConfigError, NumericalError
from .retrieval import (
    JointScorer,
    build_retriever,
    generate_toy_corpus,
    rank_all,
    recall_at_k,
    results_to_csv,
    two_stage,
)
from .training import (
    ExperimentConfig,
    ExperimentTrace,
    figure1_config,
    train_dataset,
    train_streaming,
)

SAMPLER_ALIASES = {"random": "uniform", "hard": "hard_distinct", "mixed": "mixed"}

DEFAULT_CORPUS = {"vocab_size": 50, "entity_count": 200, "mention_count": 800,
                  "length": 8, "corruption": 0.3}


def _add_common(parser):
    parser.add_argument("--config", type=Path, help="JSON config file")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", type=Path, help="output path")
    parser.add_argument("--sampler", choices=sorted(SAMPLER_ALIASES), default="hard")
    parser.add_argument("--p", type=float, default=0.5,
                        help="hard fraction for the mixed sampler")
    parser.add_argument("--k", type=int, default=None, help="candidate count K")
    parser.add_argument("--arch", choices=ARCHITECTURES, default="dual")
    parser.add_argument("--threads", type=int, default=os.cpu_count() or 1)


def build_parser():
    parser = argparse.ArgumentParser(prog="ncelab")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("synth-bias", "synthetic hard-vs-random bias experiment"),
        ("verify-theorems", "enumeration oracle suite"),
        ("train-retriever", "train a toy retriever"),
        ("eval-recall", "recall@K for a retriever checkpoint"),
        ("rerank", "two-stage retrieve-then-rerank accuracy"),
        ("dump-config", "print architecture / experiment configs"),
    ]:
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        if name == "synth-bias":
            p.add_argument("--steps", type=int, default=1200)
        if name in ("eval-recall", "rerank"):
            p.add_argument("--checkpoint", type=Path, required=True)
    return parser


def _load_json(path):
    if not path.exists():
        raise ConfigError(f"config not found: {path}")
    return json.loads(path.read_text())


def cmd_synth_bias(args) -> int:
    out = args.out or Path("trace.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    traces = {}
    for name, kind in (("hard", "hard_distinct"), ("random", "uniform")):
        if args.config:
            cfg = ExperimentConfig(**_load_json(args.config))
            cfg.negatives = {"kind": kind, "p": args.p}
        else:
            cfg = figure1_config(seed=args.seed, sampler_kind=kind,
                                 steps=args.steps)
        if args.k:
            cfg.K = args.k
        cfg.threads = args.threads
        cfg.seed = args.seed
        cfg.trace_path = str(out) if name == "hard" \
            else str(out.with_name(out.stem + "_random" + out.suffix))
        _, traces[name] = train_streaming(cfg)
    from .report import render_synthetic_figures
    figures = render_synthetic_figures(traces, out.parent)
    print(f"traces: {out} and {out.with_name(out.stem + '_random' + out.suffix)}")
    for fig in figures:
        print(f"figure: {fig}")
    return 0


def cmd_verify_theorems(args) -> int:
    from .verify import run_all

    results = run_all(seed=args.seed)
    width = max(len(k) for k in results)
    for key, value in results.items():
        print(f"{key:<{width}}  {value:.3e}")
    return 0


def _corpus_from(args, cfg):
    params = dict(DEFAULT_CORPUS)
    params.update(cfg.get("corpus", {}))
    params["seed"] = cfg.get("corpus", {}).get("seed", args.seed)
    return generate_toy_corpus(**params), params


def cmd_train_retriever(args) -> int:
    cfg = _load_json(args.config) if args.config else {}
    corpus, corpus_params = _corpus_from(args, cfg)
    arch = cfg.get("arch", args.arch)
    m_prime = cfg.get("m_prime", 4)
    hidden = cfg.get("hidden", 16)
    retriever = build_retriever(corpus, arch, m_prime=m_prime, hidden=hidden,
                                seed=args.seed)
    train_cfg = ExperimentConfig(
        scorer={"kind": "encoder", "arch": arch},
        negatives={"kind": SAMPLER_ALIASES[args.sampler], "p": args.p},
        K=args.k or cfg.get("K", 8),
        batch_size=cfg.get("batch_size", 32),
        epochs=cfg.get("epochs", 3),
        learning_rate=cfg.get("learning_rate", 0.05),
        seed=args.seed)
    train_dataset(train_cfg, retriever, corpus.train_idx,
                  corpus.golds[corpus.train_idx])
    out = args.out or Path(f"retriever_{arch}.json")
    retriever.encoder.version += 1
    payload = {
        "format_version": 1,
        "arch": arch, "m_prime": m_prime, "hidden": hidden,
        "corpus": corpus_params,
        "seed": args.seed,
        "params": retriever.get_params().tolist(),
    }
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(payload))
    result = rank_all(retriever, corpus.val_idx, k_eval=64)
    recall = recall_at_k(result, corpus.golds[corpus.val_idx])
    print(f"checkpoint: {out}")
    print(f"val recall@{result.k_eval}: {recall:.4f}")
    return 0


def _load_retriever(path):
    payload = _load_json(path)
    corpus = generate_toy_corpus(**payload["corpus"])
    retriever = build_retriever(corpus, payload["arch"],
                                m_prime=payload.get("m_prime"),
                                hidden=payload["hidden"], seed=payload["seed"])
    retriever.set_params(np.asarray(payload["params"]))
    return retriever, corpus


def cmd_eval_recall(args) -> int:
    retriever, corpus = _load_retriever(args.checkpoint)
    k = args.k or 64
    result = rank_all(retriever, corpus.val_idx, k_eval=k)
    recall = recall_at_k(result, corpus.golds[corpus.val_idx])
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        results_to_csv(args.out, result, corpus.golds[corpus.val_idx],
                       mention_ids=corpus.val_idx)
        print(f"results: {args.out}")
    print(f"recall@{result.k_eval}: {recall:.4f}")
    return 0


def cmd_rerank(args) -> int:
    retriever, corpus = _load_retriever(args.checkpoint)
    k_retrieve = args.k or 64
    reranker = JointScorer.init_random(corpus, seed=args.seed)
    # top-(K-1) candidates from the fixed retriever as negatives
    from .losses import CandidateTuple, hard_nce_empirical
    from .training import OptimizerState, optimizer_step

    train_idx = corpus.train_idx
    batches = []
    for x in train_idx:
        scores = retriever.score_all(int(x))
        order = np.argsort(-scores, kind="stable")
        gold = int(corpus.golds[x])
        negs = tuple(int(y) for y in order if int(y) != gold)[:7]
        batches.append((int(x), CandidateTuple(gold, negs)))
    state = OptimizerState(learning_rate=0.05)
    theta = reranker.get_params()
    rng = np.random.default_rng(args.seed)
    for _ in range(3):
        order = rng.permutation(len(batches))
        for start in range(0, len(batches), 32):
            batch = [batches[i] for i in order[start:start + 32]]
            loss = hard_nce_empirical(reranker, batch)
            theta = optimizer_step(state, theta, loss.gradient)
            reranker.set_params(theta)
    acc = two_stage(retriever, reranker, corpus.golds[corpus.val_idx],
                    corpus.val_idx, k_retrieve=k_retrieve)
    print(f"two-stage unnormalized accuracy: {acc:.4f}")
    return 0


def cmd_dump_config(args) -> int:
    if args.arch:
        cfg = instantiate_named(args.arch, 4 if args.arch in ("poly", "multi")
                                else None)
        print(f"architecture: {args.arch}")
        for field_name in ("direction", "query_m", "key_reduction", "key_m",
                           "attention"):
            print(f"  {field_name}: {getattr(cfg, field_name)}")
    default = ExperimentConfig(seed=args.seed)
    text = default.to_json()
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(text)
        print(f"config: {args.out}")
    else:
        print(text)
    return 0


COMMANDS = {
    "synth-bias": cmd_synth_bias,
    "verify-theorems": cmd_verify_theorems,
    "train-retriever": cmd_train_retriever,
    "eval-recall": cmd_eval_recall,
    "rerank": cmd_rerank,
    "dump-config": cmd_dump_config,
}


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


def main():
    raise SystemExit(run())


if __name__ == "__main__":
    main()
