"""Matplotlib figures written next to the text/CSV/JSON reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# Strip volatile PNG metadata so figures are byte-stable across runs.
_PNG_META = {"Software": None}

plt.rcParams.update(
    {
        "font.size": 9,
        "axes.spines.top": False,
        "axes.spines.right": False,
        "figure.dpi": 100,
    }
)


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="png", metadata=_PNG_META)
    plt.close(fig)
    return path


def plot_experiment(report, path) -> Path:
    from .experiments import METRIC_LABELS, METRICS

    rows = report.rows
    x = np.arange(len(rows))
    width = 0.8 / len(METRICS)
    fig, ax = plt.subplots(figsize=(max(5.0, 1.1 * len(rows) + 2), 3.4))
    for i, m in enumerate(METRICS):
        med = [r.median(m) for r in rows]
        ax.bar(x + (i - 1) * width, med, width, label=METRIC_LABELS[m])
        for j, r in enumerate(rows):
            vals = [r.per_seed[s][m] for s in report.seeds]
            ax.plot([x[j] + (i - 1) * width] * len(vals), vals, "k.", ms=3)
    ax.set_xticks(x)
    ax.set_xticklabels([r.label.replace(" + ", "\n+ ") for r in rows], fontsize=7)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("held-out score (median, dots = seeds)")
    ax.set_title(report.title)
    ax.legend(loc="lower right", fontsize=7, frameon=False)
    fig.tight_layout()
    return _save(fig, path)


def plot_loss(loss_trace, path, initial_loss=None, title="training loss") -> Path:
    fig, ax = plt.subplots(figsize=(4.5, 3.0))
    epochs = np.arange(1, len(loss_trace) + 1)
    ax.plot(epochs, loss_trace, lw=1.2)
    if initial_loss is not None:
        ax.axhline(initial_loss, color="0.6", lw=0.8, ls="--", label="before training")
        ax.legend(frameon=False, fontsize=7)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean cross-entropy")
    ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)


def plot_confusion(confusion, path, labels=("non-explicit", "explicit")) -> Path:
    cm = np.asarray(confusion)
    fig, ax = plt.subplots(figsize=(3.2, 3.0))
    ax.imshow(cm, cmap="Blues")
    for i in range(2):
        for j in range(2):
            ax.text(j, i, str(cm[i, j]), ha="center", va="center", color="k")
    ax.set_xticks([0, 1])
    ax.set_xticklabels(labels)
    ax.set_yticks([0, 1])
    ax.set_yticklabels(labels)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    fig.tight_layout()
    return _save(fig, path)


def plot_run(results, path) -> Path:
    """One lane per source: P(explicit) per segment, explicit segments shaded."""
    sources = sorted({r.source_id for r in results})
    fig, axes = plt.subplots(len(sources), 1, figsize=(6.0, 0.9 + 1.1 * len(sources)), squeeze=False, sharey=True)
    for ax, src in zip(axes[:, 0], sources):
        for r in (r for r in results if r.source_id == src):
            if r.probabilities is None:
                ax.axvspan(r.start_s, r.end_s, color="0.85", hatch="//")
                continue
            p = r.probabilities[1]
            if r.explicit:
                ax.axvspan(r.start_s, r.end_s, color="tab:red", alpha=0.15)
            ax.hlines(p, r.start_s, r.end_s, color="tab:red" if r.explicit else "tab:blue", lw=2)
        ax.axhline(0.5, color="0.5", lw=0.6, ls=":")
        ax.set_ylim(-0.02, 1.02)
        ax.set_ylabel(src, rotation=0, ha="right", fontsize=7)
    axes[-1, 0].set_xlabel("time (s)")
    axes[0, 0].set_title("P(explicit) per segment")
    fig.tight_layout()
    return _save(fig, path)
