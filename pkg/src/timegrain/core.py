"""Event-sequence data model and the cluster-merge primitive.

A sequence is a time-sorted list of events.  Each event carries a timestamp
(hours since sequence start, as a float), a vector of r variable values, a
boolean observed-mask over those variables, and a count of how many original
events it represents.  Raw data always has count 1; coarsening operators
produce counts > 1 (and count 0 for empty grid cells).

Storage is columnar (numpy arrays) so the transform modules can stay
vectorized; ``Event`` is a per-row view for callers that want one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class Event:
    """One timestamped observation row.

    ``x[j]`` is meaningful only where ``mask[j]`` is True; unobserved slots
    hold 0.  ``c`` is the number of original events merged into this one.
    """

    t: float
    x: np.ndarray
    mask: np.ndarray
    c: int


class EventSequence:
    """Time-sorted multivariate event sequence with per-event counts.

    Columns are exposed as read-only arrays: ``t`` (T,), ``x`` (T, r),
    ``mask`` (T, r) bool, ``c`` (T,) int.  Construction copies and freezes
    its inputs; instances are immutable and safe to share across threads.
    """

    __slots__ = ("t", "x", "mask", "c", "id")

    def __init__(self, t, x, mask, c, id: str = ""):
        t = np.asarray(t, dtype=np.float64).reshape(-1)
        x = np.asarray(x, dtype=np.float64)
        mask = np.asarray(mask, dtype=bool)
        c = np.asarray(c, dtype=np.int64).reshape(-1)
        if x.ndim != 2:
            raise ValueError(f"x must be 2-d (T, r), got shape {x.shape}")
        n = t.shape[0]
        if n < 1:
            raise ValueError("a sequence needs at least one event")
        if x.shape[0] != n or mask.shape != x.shape or c.shape[0] != n:
            raise ValueError(
                f"inconsistent shapes: t {t.shape}, x {x.shape}, "
                f"mask {mask.shape}, c {c.shape}"
            )
        for arr in (t, x, mask, c):
            arr.flags.writeable = False
        self.t = t
        self.x = x
        self.mask = mask
        self.c = c
        self.id = id

    @property
    def r(self) -> int:
        return self.x.shape[1]

    def __len__(self) -> int:
        return self.t.shape[0]

    def __getitem__(self, i: int) -> Event:
        return Event(float(self.t[i]), self.x[i], self.mask[i], int(self.c[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventSequence):
            return NotImplemented
        return (
            self.id == other.id
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.mask, other.mask)
            and np.array_equal(self.c, other.c)
        )

    def __repr__(self) -> str:
        return f"EventSequence(id={self.id!r}, T={len(self)}, r={self.r})"

    @classmethod
    def from_events(cls, events: Sequence[Event], id: str = "") -> "EventSequence":
        if not events:
            raise ValueError("a sequence needs at least one event")
        return cls(
            t=[e.t for e in events],
            x=np.stack([np.asarray(e.x, dtype=np.float64) for e in events]),
            mask=np.stack([np.asarray(e.mask, dtype=bool) for e in events]),
            c=[e.c for e in events],
            id=id,
        )


@dataclass(frozen=True)
class LabeledSequence:
    """A sequence paired with its target.

    ``label`` is a {0,1} vector (classification, possibly multilabel) or a
    single float (regression).
    """

    sequence: EventSequence
    label: np.ndarray | float


def validate(seq: EventSequence) -> list[str]:
    """Check sequence invariants; returns a list of violations (empty = ok).

    Violations are data, not failures: unsorted timestamps, non-finite
    values, nonzero values in unobserved slots, and bad counts.  A count of
    0 is tolerated only for fully-unobserved events (empty grid cells).
    """
    problems: list[str] = []
    t, x, mask, c = seq.t, seq.x, seq.mask, seq.c
    if np.any(np.diff(t) < 0):
        i = int(np.argmax(np.diff(t) < 0))
        problems.append(f"timestamps unsorted at index {i + 1}")
    if not np.all(np.isfinite(t)):
        problems.append("non-finite timestamp")
    bad_vals = ~np.isfinite(x) & mask
    if np.any(bad_vals):
        i, j = np.argwhere(bad_vals)[0]
        problems.append(f"non-finite value at event {i}, variable {j}")
    ghost = (x != 0.0) & ~mask
    if np.any(ghost):
        i, j = np.argwhere(ghost)[0]
        problems.append(f"unobserved slot nonzero at event {i}, variable {j}")
    if np.any(c < 0):
        i = int(np.argmax(c < 0))
        problems.append(f"negative count at event {i}")
    zero_c = (c == 0) & np.any(mask, axis=1)
    if np.any(zero_c):
        i = int(np.argmax(zero_c))
        problems.append(f"nonpositive count on an observed event at index {i}")
    return problems


def merge_columns(
    t: np.ndarray,
    x: np.ndarray,
    mask: np.ndarray,
    c: np.ndarray,
    starts: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Merge contiguous groups of rows; groups start at the given indices.

    Within each group: timestamp is the plain mean of member timestamps,
    each variable is the mean over members that observed it (0 and mask
    False when no member did), and counts are summed.  One reduceat pass
    per column, no Python-level loop over groups.  Relies on the data
    model's invariant that unobserved slots hold exactly 0.
    """
    starts = np.asarray(starts, dtype=np.intp)
    n = t.shape[0]
    sizes = np.empty(starts.shape[0])
    sizes[:-1] = starts[1:] - starts[:-1]
    sizes[-1] = n - starts[-1]
    t_new = np.add.reduceat(t, starts) / sizes
    obs = np.add.reduceat(mask.astype(np.float64), starts, axis=0)
    x_sum = np.add.reduceat(x, starts, axis=0)
    mask_new = obs > 0
    x_new = np.divide(x_sum, obs, out=np.zeros_like(x_sum), where=mask_new)
    c_new = np.add.reduceat(c, starts)
    return t_new, x_new, mask_new, c_new


def merge_events(members: Iterable[Event]) -> Event:
    """Collapse events into one: mean time, per-variable masked mean, summed count.

    A variable unobserved in every member comes out as 0 with mask False.
    Empty member lists are a caller bug.
    """
    members = list(members)
    if not members:
        raise ValueError("merge_events needs at least one member")
    t = np.array([e.t for e in members], dtype=np.float64)
    x = np.stack([np.asarray(e.x, dtype=np.float64) for e in members])
    mask = np.stack([np.asarray(e.mask, dtype=bool) for e in members])
    c = np.array([e.c for e in members], dtype=np.int64)
    x = np.where(mask, x, 0.0)  # hand-built events may not honor the zero-fill invariant
    t_new, x_new, mask_new, c_new = merge_columns(t, x, mask, c, np.array([0]))
    return Event(float(t_new[0]), x_new[0], mask_new[0], int(c_new[0]))
