from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from timegrain.core import Event, EventSequence, merge_events, validate


def make_event(t, x, mask, c=1):
    return Event(t, np.asarray(x, dtype=float), np.asarray(mask, dtype=bool), c)


def test_validate_minimal_sequence_ok():
    seq = EventSequence([1.0], [[2.0]], [[True]], [1])
    assert validate(seq) == []


def test_validate_flags_unsorted_timestamps():
    seq = EventSequence([2.0, 1.0], [[0.0], [0.0]], [[True], [True]], [1, 1])
    assert any("unsorted" in v for v in validate(seq))


def test_validate_flags_unobserved_nonzero():
    seq = EventSequence([0.0], [[3.0]], [[False]], [1])
    assert any("unobserved slot nonzero" in v for v in validate(seq))


def test_validate_flags_nan_and_bad_counts():
    seq = EventSequence([0.0, 1.0], [[np.nan], [0.0]], [[True], [True]], [1, 0])
    problems = validate(seq)
    assert any("non-finite value" in v for v in problems)
    assert any("count" in v for v in problems)


def test_validate_allows_empty_grid_cell():
    seq = EventSequence([0.0], [[0.0]], [[False]], [0])
    assert validate(seq) == []


def test_sequence_rejects_empty_and_mismatched():
    with pytest.raises(ValueError):
        EventSequence([], np.zeros((0, 1)), np.zeros((0, 1), bool), [])
    with pytest.raises(ValueError):
        EventSequence([0.0], np.zeros((2, 1)), np.zeros((2, 1), bool), [1, 1])


def test_merge_pair_means_time_and_values():
    a = make_event(0.45, [2.0, 20.0], [True, True])
    b = make_event(0.55, [3.0, 30.0], [True, True])
    merged = merge_events([a, b])
    assert merged.t == pytest.approx((0.45 + 0.55) / 2)
    assert merged.x == pytest.approx([2.5, 25.0])
    assert merged.c == 2


def test_merge_single_member_unchanged():
    e = make_event(1.5, [4.0], [True], c=3)
    merged = merge_events([e])
    assert merged.t == e.t
    assert np.array_equal(merged.x, e.x)
    assert np.array_equal(merged.mask, e.mask)
    assert merged.c == e.c


def test_merge_masked_mean_rules():
    a = make_event(0.0, [4.0, 0.0], [True, False])
    b = make_event(1.0, [0.0, 0.0], [False, False])
    merged = merge_events([a, b])
    assert merged.x[0] == 4.0 and merged.mask[0]
    assert merged.x[1] == 0.0 and not merged.mask[1]


def test_merge_empty_members_is_caller_bug():
    with pytest.raises(ValueError):
        merge_events([])


@st.composite
def member_lists(draw):
    r = draw(st.integers(1, 4))
    n = draw(st.integers(1, 8))
    members = []
    for _ in range(n):
        t = draw(st.floats(-100, 100))
        mask = [draw(st.booleans()) for _ in range(r)]
        x = [draw(st.floats(-50, 50)) if m else 0.0 for m in mask]
        c = draw(st.integers(1, 5))
        members.append(make_event(t, x, mask, c))
    return members


@settings(max_examples=200)
@given(member_lists())
def test_merge_conserves_counts_and_stays_in_span(members):
    merged = merge_events(members)
    assert merged.c == sum(e.c for e in members)
    ts = [e.t for e in members]
    assert min(ts) <= merged.t <= max(ts)


@settings(max_examples=200)
@given(member_lists(), st.randoms())
def test_merge_is_permutation_invariant(members, pyrandom):
    merged = merge_events(members)
    shuffled = list(members)
    pyrandom.shuffle(shuffled)
    again = merge_events(shuffled)
    assert again.t == pytest.approx(merged.t, rel=1e-12, abs=1e-12)
    assert again.x == pytest.approx(merged.x, rel=1e-12, abs=1e-12)
    assert np.array_equal(again.mask, merged.mask)
    assert again.c == merged.c


@settings(max_examples=100)
@given(st.integers(1, 8), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_merge_fully_observed_equals_arithmetic_mean(n, r, seed):
    rng = np.random.default_rng(seed)
    xs = rng.normal(size=(n, r))
    members = [make_event(float(i), xs[i], [True] * r) for i in range(n)]
    merged = merge_events(members)
    assert merged.x == pytest.approx(xs.mean(axis=0), rel=1e-12, abs=1e-15)


def test_sequence_is_immutable():
    seq = EventSequence([0.0, 1.0], [[1.0], [2.0]], [[True], [True]], [1, 1])
    with pytest.raises(ValueError):
        seq.t[0] = 5.0
