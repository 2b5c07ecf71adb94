from __future__ import annotations

import numpy as np
import pytest

from timegrain.augment import (
    AugmentConfig,
    IntervalWeights,
    NoIntervalsError,
    SamplingExhaustedError,
    fast_augment,
    interval_weights,
    merge_sampled_intervals,
    merge_selected_intervals,
    race_keys,
    sample_intervals,
)
from timegrain.coarsen import retained_length
from timegrain.core import EventSequence

from .conftest import random_sequence

# chi-square 99.9% quantiles by degrees of freedom
CHI2_999 = {1: 10.828, 2: 13.816}


def seq_with_times(t):
    t = np.asarray(t, dtype=float)
    n = t.shape[0]
    return EventSequence(t, np.zeros((n, 1)), np.ones((n, 1), bool), np.ones(n, dtype=np.int64))


class TestIntervalWeights:
    def test_weighted_gaps_one_and_three(self):
        w = interval_weights(seq_with_times([0.0, 1.0, 4.0]), weighted=True)
        assert w.probs == pytest.approx([0.75, 0.25])

    def test_unweighted_uniform(self):
        w = interval_weights(seq_with_times([0.0, 5.0, 6.0, 9.0]), weighted=False)
        assert w.probs == pytest.approx([1 / 3, 1 / 3, 1 / 3])

    def test_zero_gap_clamped_and_dominant(self):
        w = interval_weights(seq_with_times([1.0, 1.0, 3.0]), weighted=True)
        # clamped formula: probs = [1e9, 0.5] normalized
        assert w.probs[1] == pytest.approx(0.5 / (1e9 + 0.5), rel=1e-12)
        rng = np.random.default_rng(17)
        keys = race_keys(w, rng, size=10**5)
        share = float(np.mean(keys.argmin(axis=1) == 0))
        assert share > 0.999

    def test_single_event_has_no_intervals(self):
        with pytest.raises(NoIntervalsError):
            interval_weights(seq_with_times([2.0]), weighted=True)

    def test_weights_validation(self):
        with pytest.raises(ValueError):
            IntervalWeights(probs=np.array([0.5, 0.4]))
        with pytest.raises(ValueError):
            IntervalWeights(probs=np.array([1.5, -0.5]))


class TestSampleIntervals:
    def test_zero_draws_empty(self):
        w = IntervalWeights(probs=np.array([0.5, 0.5]))
        assert sample_intervals(w, 0, np.random.default_rng(0)).size == 0

    def test_all_draws_exhaust(self):
        w = IntervalWeights(probs=np.array([0.2, 0.3, 0.5]))
        got = sample_intervals(w, 3, np.random.default_rng(0))
        assert got.tolist() == [0, 1, 2]

    def test_more_than_nonzero_support_errors(self):
        w = IntervalWeights(probs=np.array([1.0, 0.0]))
        with pytest.raises(SamplingExhaustedError):
            sample_intervals(w, 2, np.random.default_rng(0))

    def test_zero_probability_never_selected(self):
        w = IntervalWeights(probs=np.array([0.5, 0.0, 0.5]))
        rng = np.random.default_rng(1)
        for _ in range(200):
            assert 1 not in sample_intervals(w, 2, rng)

    def test_uniform_first_draw_chi_square(self):
        w = IntervalWeights(probs=np.full(3, 1 / 3))
        rng = np.random.default_rng(99)
        keys = race_keys(w, rng, size=3 * 10**5)
        first = keys.argmin(axis=1)
        observed = np.bincount(first, minlength=3)
        expected = first.size / 3
        stat = float(np.sum((observed - expected) ** 2 / expected))
        assert stat < CHI2_999[2]

    def test_weighted_first_draw_matches_probs_chi_square(self):
        gaps_seq = seq_with_times([0.0, 1.0, 3.0, 7.0])  # gaps 1, 2, 4
        w = interval_weights(gaps_seq, weighted=True)
        assert w.probs == pytest.approx([4 / 7, 2 / 7, 1 / 7])
        rng = np.random.default_rng(7)
        n = 10**5
        keys = race_keys(w, rng, size=n)
        observed = np.bincount(keys.argmin(axis=1), minlength=3)
        expected = w.probs * n
        stat = float(np.sum((observed - expected) ** 2 / expected))
        assert stat < CHI2_999[2]

    def test_deterministic_under_seed(self):
        w = IntervalWeights(probs=np.array([0.1, 0.2, 0.3, 0.4]))
        a = sample_intervals(w, 2, np.random.default_rng(5))
        b = sample_intervals(w, 2, np.random.default_rng(5))
        assert np.array_equal(a, b)


class TestFastAugment:
    def test_p_high_zero_is_identity_and_consumes_no_randomness(self):
        rng = np.random.default_rng(3)
        seq = random_sequence(rng, n=12)
        cfg = AugmentConfig(p_high=0.0)
        state_before = rng.bit_generator.state
        out = fast_augment(seq, cfg, rng)
        assert out is seq
        assert rng.bit_generator.state == state_before

    def test_forced_pair_merge_known_values(self, five_event_sequence):
        # merging interval 1 (0-based) joins events 2 and 3 (1-based)
        out = merge_selected_intervals(five_event_sequence, np.array([1]))
        assert len(out) == 4
        assert out.t[1] == pytest.approx(0.5)
        assert out.x[1] == pytest.approx([2.5, 25.0])
        assert out.c.tolist() == [1, 2, 1, 1]

    def test_forced_chain_collapses_transitively(self):
        seq = seq_with_times([0.0, 1.0, 2.0, 3.0])
        out = merge_selected_intervals(seq, np.array([0, 1]))
        assert len(out) == 2
        assert out.c.tolist() == [3, 1]
        assert out.t[0] == pytest.approx(1.0)

    def test_single_event_returned_unchanged(self):
        seq = seq_with_times([5.0])
        out = fast_augment(seq, AugmentConfig(p_high=0.9), np.random.default_rng(0))
        assert out is seq

    def test_length_contract_at_known_p(self):
        rng = np.random.default_rng(123)
        for _ in range(300):
            seq = random_sequence(rng)
            n = len(seq)
            p = float(rng.uniform(0.0, 1.0))
            out = merge_sampled_intervals(seq, p, bool(rng.random() < 0.5), rng)
            m = min(retained_length(p, n), n - 1) if n > 1 else 0
            assert len(out) == n - m
            assert out.c.sum() == seq.c.sum()
            assert np.all(np.diff(out.t) >= 0)
            assert out.t[0] >= seq.t[0] - 1e-12
            assert out.t[-1] <= seq.t[-1] + 1e-12

    def test_seed_determinism(self):
        rng = np.random.default_rng(8)
        seq = random_sequence(rng, n=25)
        cfg = AugmentConfig(p_high=0.7, weighted=True, rng_seed=42)
        a = fast_augment(seq, cfg, np.random.default_rng(cfg.rng_seed))
        b = fast_augment(seq, cfg, np.random.default_rng(cfg.rng_seed))
        assert np.array_equal(a.t, b.t)
        assert np.array_equal(a.x, b.x)
        assert np.array_equal(a.mask, b.mask)
        assert np.array_equal(a.c, b.c)

    def test_inlined_sampling_matches_public_ops(self):
        # merge_sampled_intervals inlines interval_weights/sample_intervals;
        # with the same generator state both must select the same intervals
        rng = np.random.default_rng(31)
        for _ in range(50):
            seq = random_sequence(rng, n=int(rng.integers(2, 30)))
            p = float(rng.uniform(0.05, 0.95))
            weighted = bool(rng.random() < 0.5)
            seed = int(rng.integers(0, 2**31))

            r1 = np.random.default_rng(seed)
            out_fast = merge_sampled_intervals(seq, p, weighted, r1)

            r2 = np.random.default_rng(seed)
            n = len(seq)
            m = min(retained_length(p, n), n - 1)
            selected = sample_intervals(interval_weights(seq, weighted), m, r2)
            out_ref = merge_selected_intervals(seq, selected)
            assert np.array_equal(out_fast.t, out_ref.t)
            assert np.array_equal(out_fast.c, out_ref.c)

    def test_p_cap_near_one(self):
        # ceil(p*T) can exceed the T-1 available intervals; the draw is capped
        seq = seq_with_times([0.0, 0.1, 0.2])
        out = merge_sampled_intervals(seq, 0.99, False, np.random.default_rng(0))
        assert len(out) == 1
        assert out.c[0] == 3

    def test_config_validation(self):
        with pytest.raises(ValueError):
            AugmentConfig(p_high=1.0)
        with pytest.raises(ValueError):
            AugmentConfig(p_high=-0.2)
