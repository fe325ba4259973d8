import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dpp.errors import FormatError
from dpp.geometry import PyramidGeometry
from dpp.inference import (Proposal, VideoMeta, decode_clip, nms, read_proposals, stitch_video,
                           tiou, tiou_matrix, write_proposals)
from dpp.model import ModelOutput
from oracles import interval_iou, nms_brute

GEOM = PyramidGeometry()


def constant_output(geometry, logits=(0.0, 0.0), offsets=(0.0, 0.0)):
    make = lambda v, t: np.tile(np.asarray(v, float)[None, :, None], (1, 1, t))
    return ModelOutput([make(logits, t) for t in geometry.lengths],
                       [make(offsets, t) for t in geometry.lengths])


class TestTiou:
    def test_examples(self):
        assert tiou((0, 10), (0, 10)) == 1.0
        assert tiou((0, 10), (20, 30)) == 0.0
        assert tiou((0, 10), (10, 20)) == 0.0
        assert tiou((0, 10), (5, 15)) == pytest.approx(1 / 3)

    def test_degenerate(self):
        with pytest.raises(ValueError):
            tiou((5, 5), (0, 10))

    @given(st.lists(st.tuples(st.floats(0, 100), st.floats(0.01, 50)), min_size=1, max_size=8))
    def test_matrix_matches_scalar(self, items):
        s = np.array([a for a, _ in items])
        e = s + np.array([b for _, b in items])
        m = tiou_matrix(s, e, s, e)
        for i, j in itertools.product(range(len(items)), repeat=2):
            assert m[i, j] == pytest.approx(interval_iou((s[i], e[i]), (s[j], e[j])), abs=1e-12)
            assert m[i, j] == pytest.approx(m[j, i], abs=1e-15)


class TestDecode:
    def point(self, props, start):
        return next(p for p in props if p.t_start == pytest.approx(start))

    def test_zero_offsets(self):
        video = VideoMeta("v", 640)
        props = decode_clip(constant_output(GEOM), 0, video, GEOM)
        assert len(props) == 126
        p = self.point(props, 26 / 8)
        assert p.t_end == pytest.approx(34 / 8) and p.score == 0.5

    def test_clip_offset_shifts(self):
        props = decode_clip(constant_output(GEOM), 128, VideoMeta("v", 640), GEOM)
        assert self.point(props, 154 / 8).t_end == pytest.approx(162 / 8)

    def test_padding_points_dropped_and_clamped(self):
        video = VideoMeta("v", 300)
        props = decode_clip(constant_output(GEOM, offsets=(6.0, 6.0)), 128, video, GEOM)
        centers = GEOM.point_times + 128
        assert len(props) == int(np.sum(centers < 300))
        assert all(0 <= p.t_start < p.t_end <= 300 / 8 for p in props)

    def test_single_clip_at_most_126(self):
        props = decode_clip(constant_output(GEOM), 0, VideoMeta("v", 256), GEOM)
        assert len(props) <= 126

    def test_scores_follow_softmax(self):
        props = decode_clip(constant_output(GEOM, logits=(0.0, np.log(3))), 0, VideoMeta("v", 256), GEOM)
        assert all(p.score == pytest.approx(0.75) for p in props)


def P(s, e, q, vid="v"):
    return Proposal(vid, s, e, q)


class TestNMS:
    def test_single(self):
        assert nms([P(0, 1, 0.5)]) == [P(0, 1, 0.5)]

    def test_identical_intervals(self):
        assert nms([P(0, 10, 0.8), P(0, 10, 0.9)]) == [P(0, 10, 0.9)]

    def test_worked_example(self):
        a, b, c = P(0, 10, 0.9), P(1, 11, 0.8), P(20, 30, 0.7)
        assert tiou((0, 10), (1, 11)) == pytest.approx(9 / 11)
        assert nms([c, b, a], 0.7) == [a, c]

    def test_strict_suppression(self):
        # tIoU exactly 0.5 is kept at threshold 0.5
        assert len(nms([P(0, 10, 0.9), P(0, 5, 0.8)], 0.5)) == 2

    def test_empty(self):
        assert nms([]) == []

    def test_brute_force_1000_sets(self):
        rng = np.random.default_rng(2024)
        for _ in range(1000):
            n = int(rng.integers(1, 51))
            # coarse grid so score and boundary ties actually happen
            s = rng.integers(0, 60, n) / 2
            e = s + rng.integers(1, 30, n) / 2
            q = rng.integers(0, 20, n) / 20
            props = [P(float(a), float(b), float(c)) for a, b, c in zip(s, e, q)]
            thr = float(rng.choice([0.3, 0.5, 0.7, 0.9]))
            got = [(p.t_start, p.t_end, p.score) for p in nms(props, thr)]
            assert got == nms_brute([(p.t_start, p.t_end, p.score) for p in props], thr)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 50), st.integers(1, 20), st.integers(0, 9)),
                    min_size=1, max_size=20), st.randoms(use_true_random=False))
    def test_order_invariant_and_pairwise_separated(self, items, shuffler):
        props = [P(float(a), float(a + d), q / 10) for a, d, q in items]
        shuffled = props[:]
        shuffler.shuffle(shuffled)
        kept = nms(props, 0.7)
        assert kept == nms(shuffled, 0.7)
        for x, y in itertools.combinations(kept, 2):
            assert tiou((x.t_start, x.t_end), (y.t_start, y.t_end)) <= 0.7


class TestStitch:
    def test_one_clip_equals_nms(self):
        props = decode_clip(constant_output(GEOM, offsets=(3.0, 3.0)), 0, VideoMeta("v", 256), GEOM)
        assert stitch_video([props]) == nms(props)

    def test_duplicates_across_clips(self):
        assert stitch_video([[P(1, 2, 0.6)], [P(1, 2, 0.6)]]) == [P(1, 2, 0.6)]

    def test_two_clips_match_oracle(self):
        clips = [[P(0, 10, 0.9), P(2, 12, 0.5)], [P(8, 18, 0.8), P(9, 19, 0.95)]]
        got = [(p.t_start, p.t_end, p.score) for p in stitch_video(clips, 0.7)]
        flat = [(p.t_start, p.t_end, p.score) for c in clips for p in c]
        assert got == nms_brute(flat, 0.7)

    def test_permutation_invariant(self):
        clips = [[P(0, 10, 0.9), P(2, 12, 0.5)], [P(8, 18, 0.8)], [P(9, 19, 0.95)]]
        ref = stitch_video(clips)
        for perm in itertools.permutations(clips):
            assert stitch_video(list(perm)) == ref

    def test_mixed_videos(self):
        with pytest.raises(ValueError):
            stitch_video([[P(0, 1, 0.5, "a")], [P(0, 1, 0.5, "b")]])


class TestProposalFile:
    def test_round_trip(self, tmp_path):
        props = [P(0.5, 1.25, 0.3, "b"), P(0, 2, 0.9, "a"), P(1, 3, 0.7, "a")]
        text = write_proposals(tmp_path / "p.csv", props)
        assert text.splitlines() == ["video_id,t_start,t_end,score",
                                     "a,0.000000,2.000000,0.900000",
                                     "a,1.000000,3.000000,0.700000",
                                     "b,0.500000,1.250000,0.300000"]
        back = read_proposals(tmp_path / "p.csv")
        assert [p.score for p in back["a"]] == [0.9, 0.7]

    def test_header_only(self, tmp_path):
        assert write_proposals(tmp_path / "p.csv", []) == "video_id,t_start,t_end,score\n"
        assert read_proposals(tmp_path / "p.csv") == {}

    def test_bad_header(self, tmp_path):
        (tmp_path / "p.csv").write_text("a,b\n")
        with pytest.raises(FormatError):
            read_proposals(tmp_path / "p.csv")
