import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dpp.assignment import (AssignConfig, GroundTruth, Status, assign_labels, decode_offsets,
                            encode_offsets, sample_balanced)
from dpp.errors import DataError
from dpp.geometry import PyramidGeometry, stride

GEOM = PyramidGeometry()


class TestEncoding:
    def test_offsets_equal_stride(self):
        assert encode_offsets(1, 7, GroundTruth(26, 34)) == (0.0, 0.0)

    def test_twice_the_stride(self):
        s1, s2 = encode_offsets(1, 7, GroundTruth(22, 38))
        assert s1 == pytest.approx(3 * math.log(2)) and s2 == pytest.approx(3 * math.log(2))
        assert s1 == pytest.approx(2.0794, abs=1e-4)

    def test_four_times_the_stride_exceeds_bound(self):
        s1, _ = encode_offsets(1, 7, GroundTruth(14, 46))
        assert s1 == pytest.approx(4.1589, abs=1e-4) and s1 > 3

    def test_boundary_point_is_degenerate(self):
        with pytest.raises(DataError):
            encode_offsets(1, 7, GroundTruth(30, 40))
        with pytest.raises(DataError):
            encode_offsets(1, 7, GroundTruth(0, 20))

    def test_decode_examples(self):
        assert decode_offsets(1, 7, 0.0, 0.0) == (26.0, 34.0)
        start, end = decode_offsets(1, 7, 3 * math.log(2), 3 * math.log(2))
        assert start == pytest.approx(22) and end == pytest.approx(38)

    def test_round_trip_10k(self):
        rng = np.random.default_rng(7)
        worst = 0.0
        for _ in range(10_000):
            level = int(rng.integers(1, 7))
            t = int(rng.integers(0, GEOM.level_length(level)))
            c = GEOM.point_to_time(level, t)
            gt = GroundTruth(c - rng.uniform(0.01, 400), c + rng.uniform(0.01, 400)) \
                if c > 400 else GroundTruth(c * rng.uniform(0, 0.999), c + rng.uniform(0.01, 400))
            s1, s2 = encode_offsets(level, t, gt)
            a, b = decode_offsets(level, t, s1, s2)
            worst = max(worst, abs(a - gt.t_start), abs(b - gt.t_end))
        assert worst <= 1e-6


class TestScaleBound:
    def test_admissible_window_is_e_to_the_plus_minus_one(self):
        # with lambda = eta = 3, |3 ln(d / s)| <= 3  <=>  d / s in [1/e, e]
        cfg = AssignConfig()
        lo, hi = math.exp(-cfg.bound / cfg.scale), math.exp(cfg.bound / cfg.scale)
        assert lo == pytest.approx(1 / math.e) and hi == pytest.approx(math.e)

    def test_dense_grid_brute_force(self):
        # every level-1 point inside a gt is positive exactly when both
        # distances lie within [s/e, s*e]
        s = stride(1)
        for start in np.arange(0, 40, 0.5):
            for length in np.arange(0.5, 40, 1.5):
                gt = GroundTruth(float(start), float(start + length))
                labels = assign_labels(GEOM, [gt])
                for i in np.flatnonzero(GEOM.point_levels == 1):
                    c = GEOM.point_times[i]
                    if not gt.t_start < c < gt.t_end:
                        assert labels.status[i] == Status.NEGATIVE
                        continue
                    d1, d2 = c - gt.t_start, gt.t_end - c
                    inside = all(s / math.e * (1 - 1e-12) <= d <= s * math.e * (1 + 1e-12)
                                 for d in (d1, d2))
                    expected = Status.POSITIVE if inside else Status.IGNORED
                    assert labels.status[i] == expected, (start, length, c)


class TestAssign:
    def test_no_ground_truths(self):
        labels = assign_labels(GEOM, [])
        assert len(labels) == 126 and np.all(labels.status == Status.NEGATIVE)

    def test_worked_example(self):
        labels = assign_labels(GEOM, [GroundTruth(22, 38)])
        by_frame = {GEOM.point_times[i]: i for i in np.flatnonzero(GEOM.point_levels == 1)}
        p30 = labels[by_frame[30.0]]
        assert p30.status is Status.POSITIVE
        assert p30.targets == pytest.approx((3 * math.log(2),) * 2)
        # c = 26: offsets (4, 12) -> (0, 3 ln 3) = (0, 3.296), outside eta
        assert encode_offsets(1, 6, GroundTruth(22, 38))[1] == pytest.approx(3.296, abs=1e-3)
        assert labels[by_frame[26.0]].status is Status.IGNORED
        assert labels[by_frame[18.0]].status is Status.NEGATIVE

    def test_unbounded_eta_leaves_nothing_ignored(self):
        gts = [GroundTruth(10, 90), GroundTruth(120, 250)]
        labels = assign_labels(GEOM, gts, AssignConfig(bound=1e9))
        assert not np.any(labels.status == Status.IGNORED)
        c = GEOM.point_times
        inside = ((c > 10) & (c < 90)) | ((c > 120) & (c < 250))
        np.testing.assert_array_equal(labels.status == Status.POSITIVE, inside)

    def test_overlapping_ground_truths_rejected(self):
        with pytest.raises(DataError):
            assign_labels(GEOM, [GroundTruth(0, 50), GroundTruth(40, 60)])

    def test_each_point_matches_one_gt(self):
        gts = [GroundTruth(0, 50), GroundTruth(50, 100)]
        labels = assign_labels(GEOM, gts, AssignConfig(bound=1e9))
        for lab in labels:
            if lab.status is Status.POSITIVE:
                g = gts[lab.gt_index]
                c = GEOM.point_to_time(lab.point.level, lab.point.index)
                assert g.t_start < c < g.t_end

    def test_targets_decode_back(self):
        gt = GroundTruth(40, 120)
        labels = assign_labels(GEOM, [gt])
        assert len(labels.positives)
        for i in labels.positives:
            lab = labels[i]
            a, b = decode_offsets(lab.point.level, lab.point.index, *lab.targets)
            assert a == pytest.approx(40) and b == pytest.approx(120)

    def test_invalid_ground_truth(self):
        with pytest.raises(DataError):
            GroundTruth(5, 5)
        with pytest.raises(DataError):
            GroundTruth(-1, 5)


class TestSampling:
    @staticmethod
    def status(pos, neg, ignored=0):
        return np.array([1] * pos + [0] * neg + [-1] * ignored, dtype=np.int8)

    def test_balanced(self, rng):
        idx = sample_balanced(self.status(10, 100, 5), rng)
        assert len(idx) == 20
        assert np.sum(idx < 10) == 10

    def test_zero_positive_fallback(self, rng):
        idx = sample_balanced(self.status(0, 100), rng)
        assert len(idx) == 16

    def test_capped_at_availability(self, rng):
        idx = sample_balanced(self.status(50, 20), rng)
        assert len(idx) == 70

    @given(st.integers(0, 40), st.integers(0, 40), st.integers(0, 10), st.integers(0, 1000))
    def test_never_selects_ignored(self, pos, neg, ign, seed):
        status = self.status(pos, neg, ign)
        idx = sample_balanced(status, np.random.default_rng(seed))
        assert np.all(status[idx] != Status.IGNORED)
        assert len(np.unique(idx)) == len(idx)
        assert len(idx) == pos + min(pos if pos else 16, neg)

    def test_accepts_point_labels(self, rng):
        labels = assign_labels(GEOM, [GroundTruth(22, 38)])
        idx = sample_balanced(labels, rng)
        assert len(idx) == 2 * len(labels.positives)
