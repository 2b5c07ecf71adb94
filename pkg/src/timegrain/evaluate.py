"""Metrics, bootstrap uncertainty, input-sensitivity, and invariance gaps.

ROC-AUC uses the rank statistic with midrank tie handling; average
precision is the step-function integral of the precision-recall curve.
Bootstrap resamples (score, label) pairs with replacement and reports the
mean and sample standard deviation of the metric across runs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .core import EventSequence


class UndefinedMetricError(ValueError):
    """The metric is not defined on this input (e.g. single-class labels)."""


def _scores_labels(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if s.shape != y.shape or s.size == 0:
        raise ValueError("scores and labels must be equal-length and nonempty")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be binary")
    return s, y


def _midranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="mergesort")
    sorted_vals = values[order]
    boundary = np.r_[True, sorted_vals[1:] != sorted_vals[:-1]]
    group = np.cumsum(boundary) - 1
    starts = np.flatnonzero(boundary)
    ends = np.r_[starts[1:], values.size]
    mid = (starts + 1 + ends) / 2.0
    ranks = np.empty(values.size)
    ranks[order] = mid[group]
    return ranks


def roc_auc(scores, labels) -> float:
    """Area under the ROC curve via midranks (tie-averaged)."""
    s, y = _scores_labels(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("roc_auc needs both classes present")
    ranks = _midranks(s)
    return float((ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def average_precision(scores, labels) -> float:
    """Step-function area under the precision-recall curve.

    With no positives there is nothing to retrieve and the score is 0.
    """
    s, y = _scores_labels(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        return 0.0
    order = np.argsort(-s, kind="mergesort")
    y_sorted = y[order]
    s_sorted = s[order]
    # evaluate precision/recall once per distinct threshold
    last_of_group = np.r_[s_sorted[1:] != s_sorted[:-1], True]
    tp = np.cumsum(y_sorted)[last_of_group]
    total = np.flatnonzero(last_of_group) + 1.0
    precision = tp / total
    recall = tp / n_pos
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


def classification_metrics(scores, labels) -> dict[str, float]:
    return {"roc_auc": roc_auc(scores, labels), "map": average_precision(scores, labels)}


def _paired(preds, targets) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(preds, dtype=np.float64).reshape(-1)
    t = np.asarray(targets, dtype=np.float64).reshape(-1)
    if p.shape != t.shape or p.size == 0:
        raise ValueError("preds and targets must be equal-length and nonempty")
    return p, t


def mae(preds, targets) -> float:
    p, t = _paired(preds, targets)
    return float(np.mean(np.abs(p - t)))


def rmse(preds, targets) -> float:
    p, t = _paired(preds, targets)
    return float(np.sqrt(np.mean((p - t) ** 2)))


def pearson_correlation(preds, targets) -> float:
    p, t = _paired(preds, targets)
    sp, st = p.std(), t.std()
    if sp == 0.0 or st == 0.0:
        raise UndefinedMetricError("correlation needs nonzero variance on both sides")
    return float(np.mean((p - p.mean()) * (t - t.mean())) / (sp * st))


def regression_metrics(preds, targets) -> dict[str, float]:
    return {
        "mae": mae(preds, targets),
        "rmse": rmse(preds, targets),
        "correlation": pearson_correlation(preds, targets),
    }


def bootstrap(
    metric: Callable[[np.ndarray, np.ndarray], float],
    scores,
    labels,
    runs: int = 1000,
    rng: np.random.Generator | None = None,
) -> tuple[float, float]:
    """Mean and sample standard deviation of the metric over resamples.

    Pairs are resampled with replacement.  A resample on which the metric
    is undefined (single class) is redrawn, up to 100 times per run.  Each
    run draws from its own substream of the master generator, so results
    do not depend on execution order.
    """
    if runs < 1:
        raise ValueError(f"runs must be >= 1, got {runs}")
    if rng is None:
        rng = np.random.default_rng(0)
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    n = s.size
    values = np.empty(runs)
    for i, sub in enumerate(rng.spawn(runs)):
        for attempt in range(101):
            idx = sub.integers(0, n, n)
            try:
                values[i] = metric(s[idx], y[idx])
                break
            except UndefinedMetricError:
                if attempt == 100:
                    raise
    mean = float(values.mean())
    stderr = float(values.std(ddof=1)) if runs > 1 else 0.0
    return mean, stderr


def fgsm(features: np.ndarray, eps: float, gradient: np.ndarray) -> np.ndarray:
    """Perturb features by eps * sign(gradient); sign(0) contributes 0.

    The result is projected onto the closed eps-ball around the input in
    float arithmetic, so max|perturbed - features| <= eps holds exactly
    even where the addition rounds outward by an ulp.
    """
    if eps < 0:
        raise ValueError(f"eps must be >= 0, got {eps}")
    features = np.asarray(features, dtype=np.float64)
    gradient = np.asarray(gradient)
    if gradient.shape != features.shape:
        raise ValueError(
            f"gradient shape {gradient.shape} does not match features {features.shape}"
        )
    perturbed = features + eps * np.sign(gradient)
    over = np.abs(perturbed - features) > eps
    while np.any(over):
        perturbed = np.where(over, np.nextafter(perturbed, features), perturbed)
        over = np.abs(perturbed - features) > eps
    return perturbed


def fgsm_prediction(model, codec, seq: EventSequence, label, eps: float) -> np.ndarray:
    """Model output after an FGSM perturbation of its input features.

    For the ensemble, each resolution's feature matrix is perturbed along
    its own gradient and the views recombined with unchanged attention
    (the perturbation leaves the view structure intact).
    """
    from .codec import featurize
    from .model import MreModel

    if isinstance(model, MreModel):
        features, descs = model.view_features(seq, codec)
        grads = model.input_gradients(features, descs, label)
        perturbed = [fgsm(f, eps, g) for f, g in zip(features, grads)]
        return model.forward_views(perturbed, descs)
    features = featurize(seq, codec)
    grad = model.input_gradient(features, label)
    return model.forward(fgsm(features, eps, grad))


def invariance_gap(
    predict: Callable[[EventSequence], np.ndarray],
    sequences: Iterable[EventSequence],
    transform: Callable[[EventSequence], EventSequence],
) -> np.ndarray:
    """Mean absolute prediction change under the transform, per output."""
    diffs = []
    for seq in sequences:
        base = np.atleast_1d(np.asarray(predict(seq), dtype=np.float64))
        moved = np.atleast_1d(np.asarray(predict(transform(seq)), dtype=np.float64))
        diffs.append(np.abs(moved - base))
    if not diffs:
        raise ValueError("need at least one sequence")
    return np.mean(np.stack(diffs), axis=0)


@dataclass(frozen=True)
class MetricSummary:
    point: float
    boot_mean: float
    boot_se: float
    runs: int

    def __post_init__(self):
        if self.boot_se < 0 or self.runs < 1:
            raise ValueError("standard error must be >= 0 and runs >= 1")


@dataclass
class EvalReport:
    """Named metric values with bootstrap mean and standard error."""

    metrics: dict[str, MetricSummary]

    @classmethod
    def build(
        cls,
        named_metrics: Sequence[tuple[str, Callable]],
        scores,
        labels,
        runs: int = 0,
        rng: np.random.Generator | None = None,
    ) -> "EvalReport":
        """Evaluate each metric, bootstrapping when runs > 0."""
        out: dict[str, MetricSummary] = {}
        for name, fn in named_metrics:
            point = float(fn(scores, labels))
            if runs > 0:
                mean, se = bootstrap(fn, scores, labels, runs=runs, rng=rng)
                out[name] = MetricSummary(point, mean, se, runs)
            else:
                out[name] = MetricSummary(point, point, 0.0, 1)
        return cls(metrics=out)
