from __future__ import annotations

import itertools

import numpy as np
import pytest

from timegrain.core import EventSequence


@pytest.fixture
def five_event_sequence() -> EventSequence:
    """Five events whose optimal 3-clustering pairs {2,3} and {4,5}."""
    t = np.array([0.0, 0.45, 0.55, 0.90, 1.00])
    x = np.array([[1.0, 10.0], [2.0, 20.0], [3.0, 30.0], [4.0, 40.0], [5.0, 50.0]])
    mask = np.ones((5, 2), dtype=bool)
    c = np.ones(5, dtype=np.int64)
    return EventSequence(t, x, mask, c, id="five")


def random_sequence(rng: np.random.Generator, n: int | None = None, r: int = 3) -> EventSequence:
    if n is None:
        n = int(rng.integers(1, 40))
    t = np.sort(rng.uniform(0.0, 24.0, n))
    mask = rng.random((n, r)) < 0.7
    x = np.where(mask, rng.normal(size=(n, r)), 0.0)
    c = rng.integers(1, 4, n)
    return EventSequence(t, x, mask, c)


def brute_force_partition_cost(points: np.ndarray, k: int) -> float:
    """Exhaustive minimum cost over all contiguous partitions into k groups."""
    n = len(points)
    best = np.inf
    for cuts in itertools.combinations(range(1, n), k - 1):
        bounds = (0,) + cuts + (n,)
        cost = 0.0
        for a, b in zip(bounds[:-1], bounds[1:]):
            seg = points[a:b]
            cost += float(np.sum((seg - seg.mean()) ** 2))
        best = min(best, cost)
    return best
