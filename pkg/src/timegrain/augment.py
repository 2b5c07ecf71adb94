"""Stochastic temporal-clustering augmentation.

One augmentation draw picks a merge fraction p uniformly from [0, p_high],
samples ceil(p*T) of the T-1 adjacent-event intervals without replacement
(optionally weighted toward short intervals), and collapses every run of
selected intervals into a single merged event.  The output length is
exactly T - ceil(p*T).

Sampling without replacement uses exponential race keys (key_i = E_i / w_i
with E_i ~ Exp(1)); taking the m smallest keys reproduces sequential
multinomial draws with renormalization after each draw.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coarsen import retained_length
from .core import EventSequence, merge_columns

GAP_FLOOR_HOURS = 1e-9


class NoIntervalsError(ValueError):
    """The sequence has fewer than two events, so no intervals exist."""


class SamplingExhaustedError(ValueError):
    """More draws requested than intervals with nonzero probability."""


@dataclass(frozen=True)
class AugmentConfig:
    p_high: float = 0.5
    weighted: bool = False
    rng_seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.p_high < 1.0):
            raise ValueError(f"p_high must be in [0, 1), got {self.p_high}")


@dataclass(frozen=True)
class IntervalWeights:
    """Selection probabilities over the T-1 adjacent-event intervals."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "probs", probs)
        if probs.ndim != 1 or probs.shape[0] < 1:
            raise ValueError("probs must be a nonempty 1-d vector")
        if np.any(probs < 0) or abs(float(probs.sum()) - 1.0) > 1e-12:
            raise ValueError("probs must be nonnegative and sum to 1")


def interval_weights(seq: EventSequence, weighted: bool) -> IntervalWeights:
    """Interval selection probabilities: uniform, or proportional to 1/gap.

    Gaps are floored at 1e-9 hours before inversion so simultaneous events
    become the likeliest merges instead of dividing by zero.
    """
    n = len(seq)
    if n < 2:
        raise NoIntervalsError("need at least 2 events to form intervals")
    if not weighted:
        probs = np.full(n - 1, 1.0 / (n - 1))
    else:
        gaps = np.maximum(np.diff(seq.t), GAP_FLOOR_HOURS)
        inv = 1.0 / gaps
        probs = inv / inv.sum()
    return IntervalWeights(probs=probs)


def race_keys(weights: IntervalWeights, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Exponential race keys; the m smallest are a without-replacement sample.

    ``size`` draws independent key rows at once for Monte Carlo use.
    Zero-probability intervals get infinite keys and can never win.
    """
    probs = weights.probs
    shape = probs.shape if size is None else (size, probs.shape[0])
    exp = rng.exponential(size=shape)
    safe = np.where(probs > 0, probs, 1.0)
    return np.where(probs > 0, exp / safe, np.inf)


def sample_intervals(weights: IntervalWeights, m: int, rng: np.random.Generator) -> np.ndarray:
    """Draw m distinct interval indices without replacement.

    Equivalent in distribution to sequentially sampling from the
    multinomial and renormalizing after each draw.  Returns sorted indices.
    """
    k = weights.probs.shape[0]
    if not 0 <= m <= k:
        raise ValueError(f"m must be in [0, {k}], got {m}")
    if m > int(np.count_nonzero(weights.probs > 0)):
        raise SamplingExhaustedError(
            f"cannot draw {m} intervals from {int(np.count_nonzero(weights.probs > 0))} "
            "with nonzero probability"
        )
    if m == 0:
        return np.empty(0, dtype=np.int64)
    keys = race_keys(weights, rng)
    if m == k:
        chosen = np.arange(k, dtype=np.int64)
    else:
        chosen = np.argpartition(keys, m - 1)[:m].astype(np.int64)
    return np.sort(chosen)


def merge_selected_intervals(seq: EventSequence, selected: np.ndarray) -> EventSequence:
    """Collapse events joined by the selected intervals (transitively).

    Interval i joins events i and i+1; runs of selected intervals chain
    into one cluster.  Output has len(seq) - len(selected) events.
    """
    n = len(seq)
    joined = np.zeros(n, dtype=bool)
    if selected.size:
        joined[np.asarray(selected, dtype=np.int64) + 1] = True
    starts = np.flatnonzero(~joined)
    t, x, mask, c = merge_columns(seq.t, seq.x, seq.mask, seq.c, starts)
    order = np.argsort(t, kind="stable")
    return EventSequence(t[order], x[order], mask[order], c[order], id=seq.id)


def merge_sampled_intervals(
    seq: EventSequence, p: float, weighted: bool, rng: np.random.Generator
) -> EventSequence:
    """One augmentation pass at a fixed merge fraction p.

    ceil(p*T) intervals are sampled (capped at the T-1 available) and their
    endpoint events merged.  Inlines the weight/key computation of
    ``interval_weights`` + ``sample_intervals``: race keys are invariant to
    weight normalization, so the selected set is identical.
    """
    n = len(seq)
    if n < 2:
        return seq
    m = min(retained_length(p, n), n - 1)
    if m == 0:
        return seq
    exp = rng.exponential(size=n - 1)
    if weighted:
        # keys = exp / (1/gap) = exp * gap, with the same zero-gap floor
        keys = exp * np.maximum(np.diff(seq.t), GAP_FLOOR_HOURS)
    else:
        keys = exp
    if m == n - 1:
        selected = np.arange(n - 1)
    else:
        selected = np.argpartition(keys, m - 1)[:m]
    return merge_selected_intervals(seq, selected)


def fast_augment(seq: EventSequence, cfg: AugmentConfig, rng: np.random.Generator) -> EventSequence:
    """Stochastic coarsening draw: p ~ Unif[0, p_high], then merge."""
    if len(seq) < 2 or cfg.p_high == 0.0:
        return seq
    p = float(rng.uniform(0.0, cfg.p_high))
    return merge_sampled_intervals(seq, p, cfg.weighted, rng)
