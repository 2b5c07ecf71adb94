"""Evaluation report rendering: text, delimited key-values, and figures."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluate import EvalReport

_PNG_META = {"Software": "timegrain"}


def render_text(report: EvalReport) -> str:
    """One line per metric: point value, bootstrap mean and standard error."""
    width = max(len(name) for name in report.metrics)
    lines = []
    for name, m in report.metrics.items():
        lines.append(
            f"{name:<{width}}  point={m.point:.6f}  boot_mean={m.boot_mean:.6f}"
            f"  boot_se={m.boot_se:.6f}  runs={m.runs}"
        )
    return "\n".join(lines) + "\n"


def render_tsv(report: EvalReport) -> str:
    """Machine-readable rows; floats keep full precision."""
    lines = ["metric\tpoint\tboot_mean\tboot_se\truns"]
    for name, m in report.metrics.items():
        lines.append(f"{name}\t{m.point!r}\t{m.boot_mean!r}\t{m.boot_se!r}\t{m.runs}")
    return "\n".join(lines) + "\n"


def write_report(report: EvalReport, outdir) -> list[Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    text_path = outdir / "report.txt"
    tsv_path = outdir / "metrics.tsv"
    text_path.write_text(render_text(report))
    tsv_path.write_text(render_tsv(report))
    return [text_path, tsv_path]


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)
    return path


def roc_curve_figure(scores, labels, path) -> Path:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    order = np.argsort(-s, kind="mergesort")
    tp = np.cumsum(y[order])
    fp = np.cumsum(1.0 - y[order])
    tpr = np.r_[0.0, tp / max(tp[-1], 1.0)]
    fpr = np.r_[0.0, fp / max(fp[-1], 1.0)]
    fig, ax = plt.subplots(figsize=(4.5, 4))
    ax.plot(fpr, tpr, lw=1.5)
    ax.plot([0, 1], [0, 1], ls="--", lw=0.8, color="grey")
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_title("ROC curve")
    fig.tight_layout()
    return _save(fig, path)


def pr_curve_figure(scores, labels, path) -> Path:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    order = np.argsort(-s, kind="mergesort")
    tp = np.cumsum(y[order])
    ranks = np.arange(1, y.size + 1)
    precision = tp / ranks
    recall = tp / max(tp[-1], 1.0)
    fig, ax = plt.subplots(figsize=(4.5, 4))
    ax.step(recall, precision, where="post", lw=1.5)
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_ylim(0, 1.05)
    ax.set_title("precision-recall curve")
    fig.tight_layout()
    return _save(fig, path)


def prediction_scatter_figure(preds, targets, path) -> Path:
    p = np.asarray(preds, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    fig, ax = plt.subplots(figsize=(4.5, 4))
    ax.scatter(t, p, s=8, alpha=0.6)
    lo, hi = min(t.min(), p.min()), max(t.max(), p.max())
    ax.plot([lo, hi], [lo, hi], ls="--", lw=0.8, color="grey")
    ax.set_xlabel("target")
    ax.set_ylabel("prediction")
    ax.set_title("predictions vs targets")
    fig.tight_layout()
    return _save(fig, path)


def fgsm_sweep_figure(eps_values, aucs, path) -> Path:
    fig, ax = plt.subplots(figsize=(4.5, 4))
    ax.plot(eps_values, aucs, marker="o", lw=1.5)
    ax.set_xlabel("perturbation strength")
    ax.set_ylabel("ROC-AUC")
    ax.set_title("input sensitivity")
    fig.tight_layout()
    return _save(fig, path)


def loss_curve_figure(train_loss, val_loss, path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 4))
    epochs = np.arange(1, len(train_loss) + 1)
    ax.plot(epochs, train_loss, label="train", lw=1.5)
    if val_loss:
        ax.plot(np.arange(1, len(val_loss) + 1), val_loss, label="validation", lw=1.5)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_title("training loss")
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)
