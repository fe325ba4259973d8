import pytest
from hypothesis import given, strategies as st

from dpp.geometry import PyramidGeometry, level_lengths, stride, total_points


@pytest.mark.parametrize("level,t,frame", [(1, 0, 2.0), (3, 2, 40.0), (6, 1, 192.0)])
def test_point_to_time(level, t, frame):
    assert PyramidGeometry().point_to_time(level, t) == frame


def test_point_out_of_range():
    g = PyramidGeometry()
    with pytest.raises(ValueError):
        g.point_to_time(6, 2)
    with pytest.raises(ValueError):
        g.point_to_time(1, -1)


@pytest.mark.parametrize("clip_len,levels,lengths", [
    (256, 6, (64, 32, 16, 8, 4, 2)),
    (256, 3, (64, 32, 16)),
    (8, 1, (2,)),
])
def test_level_lengths(clip_len, levels, lengths):
    assert level_lengths(clip_len, levels) == lengths


def test_indivisible_clip_length():
    with pytest.raises(ValueError):
        level_lengths(100, 6)


@pytest.mark.parametrize("levels,count", [(6, 126), (5, 124), (4, 120), (3, 112), (1, 64)])
def test_total_points(levels, count):
    assert total_points(256, levels) == count


@given(st.integers(1, 7))
def test_total_points_closed_form(levels):
    # geometric series: T/4 * (1 - 2^-L) * 2
    assert total_points(512, levels) == sum(512 // 2 ** (l + 1) for l in range(1, levels + 1))
    assert total_points(512, levels) == 256 - 256 // 2 ** levels


def test_flattened_order_is_level_major():
    g = PyramidGeometry(32, 2)
    assert list(g.point_levels) == [1] * 8 + [2] * 4
    assert list(g.point_indices) == list(range(8)) + list(range(4))
    assert list(g.point_strides) == [4] * 8 + [8] * 4
    assert g.point_times[9] == g.point_to_time(2, 1) == 12.0


def test_points_enumerate_every_level():
    g = PyramidGeometry()
    pts = g.points()
    assert len(pts) == g.total_points == 126
    assert pts[0].level == 1 and pts[-1].level == 6
    assert stride(6) == 128
