"""Figure rendering for experiment traces.

Renders loss-curve and bias-norm figures next to the delimited trace output
so a run directory is self-describing.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def render_synthetic_figures(traces: dict, out_dir) -> list[Path]:
    """traces: name -> ExperimentTrace.  Writes loss.png and bias.png."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    fig, ax = plt.subplots(figsize=(6, 4))
    for name, trace in traces.items():
        steps = trace.column("step")
        ax.plot(steps, trace.column("nce_estimate"), label=f"NCE ({name})")
        ce = trace.column("ce_exact")
        mask = np.isfinite(ce)
        ax.plot(steps[mask], ce[mask], "--", label=f"exact CE ({name})")
    ax.set_xlabel("update")
    ax.set_ylabel("loss")
    ax.legend()
    fig.tight_layout()
    loss_path = out_dir / "loss.png"
    fig.savefig(loss_path, dpi=150)
    plt.close(fig)
    written.append(loss_path)

    fig, ax = plt.subplots(figsize=(6, 4))
    for name, trace in traces.items():
        steps = trace.column("step")
        col = {"hard": "bias_norm_hard", "random": "bias_norm_random",
               "mixed": "bias_norm_mixed"}.get(name)
        if col is None:
            continue
        norms = trace.column(col)
        mask = np.isfinite(norms)
        ax.plot(steps[mask], norms[mask], label=f"bias norm ({name})")
    ax.set_xlabel("update")
    ax.set_ylabel("gradient bias norm")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    bias_path = out_dir / "bias.png"
    fig.savefig(bias_path, dpi=150)
    plt.close(fig)
    written.append(bias_path)
    return written


def render_recall_figure(recalls: dict, out_path) -> Path:
    """recalls: architecture -> {sampler name -> recall}.  Grouped bars."""
    out_path = Path(out_path)
    archs = list(recalls)
    samplers = sorted({s for r in recalls.values() for s in r})
    width = 0.8 / max(len(samplers), 1)
    fig, ax = plt.subplots(figsize=(6, 4))
    xs = np.arange(len(archs))
    for j, sampler in enumerate(samplers):
        vals = [recalls[a].get(sampler, np.nan) for a in archs]
        ax.bar(xs + j * width, vals, width, label=sampler)
    ax.set_xticks(xs + width * (len(samplers) - 1) / 2)
    ax.set_xticklabels(archs)
    ax.set_ylabel("recall")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path
