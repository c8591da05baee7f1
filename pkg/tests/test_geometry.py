import numpy as np
import pytest
from hypothesis import given, strategies as st

from trajcast.geometry import (apply_offset, box_is_valid, clamp_to_frame, iou,
                               iou_matrix, offset_between)

coords = st.floats(-100, 100, allow_nan=False)
sizes = st.floats(0, 100, allow_nan=False)
boxes = st.tuples(coords, coords, sizes, sizes).map(np.array)
# sizes big enough that x + w > x holds in floating point
solid_sizes = st.floats(1e-3, 100, allow_nan=False)
solid_boxes = st.tuples(coords, coords, solid_sizes, solid_sizes).map(np.array)


def test_iou_identity():
    assert iou([0, 0, 2, 2], [0, 0, 2, 2]) == 1.0


def test_iou_hand_case():
    # intersection 1, union 7
    assert iou([0, 0, 2, 2], [1, 1, 2, 2]) == pytest.approx(1 / 7)


def test_iou_disjoint():
    assert iou([0, 0, 2, 2], [5, 5, 2, 2]) == 0.0


def test_iou_zero_area_union():
    assert iou([0, 0, 0, 0], [0, 0, 0, 0]) == 0.0


@given(boxes, boxes)
def test_iou_symmetric_and_bounded(a, b):
    v = iou(a, b)
    assert v == iou(b, a)
    assert 0.0 <= v <= 1.0


@given(solid_boxes)
def test_iou_self_is_one(a):
    assert iou(a, a) == 1.0


def test_iou_matrix_shape():
    m = iou_matrix(np.zeros((3, 4)) + [0, 0, 1, 1], np.zeros((2, 4)) + [0, 0, 1, 1])
    assert m.shape == (3, 2)
    assert np.all(m == 1.0)


def test_offset_between_examples():
    assert offset_between([1, 2, 3, 4], [2, 4, 3, 4]).tolist() == [1, 2, 0, 0]
    assert offset_between([3, 3, 3, 3], [3, 3, 3, 3]).tolist() == [0, 0, 0, 0]
    assert offset_between([0, 0, 10, 10], [-2, 0, 12, 8]).tolist() == [-2, 0, 2, -2]


def test_apply_offset_examples():
    assert apply_offset([0, 0, 4, 4], [1, 1, 0, 0]).tolist() == [1, 1, 4, 4]
    assert apply_offset([5, 6, 7, 8], [0, 0, 0, 0]).tolist() == [5, 6, 7, 8]


def test_offset_round_trip_exact():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        a = rng.uniform(-50, 50, 4)
        b = rng.uniform(-50, 50, 4)
        assert np.allclose(apply_offset(a, offset_between(a, b)), b, atol=1e-12)


def test_negative_size_flagged_invalid():
    shrunk = apply_offset([0, 0, 2, 2], [0, 0, -3, 0])
    assert shrunk[2] == -1
    assert not box_is_valid(shrunk)
    assert box_is_valid([0, 0, 2, 2])


def test_clamp_partial():
    assert clamp_to_frame([-2, 0, 6, 6], (64, 64)).tolist() == [0, 0, 4, 6]


def test_clamp_inside_unchanged():
    assert clamp_to_frame([5, 5, 10, 10], (64, 64)).tolist() == [5, 5, 10, 10]


def test_clamp_fully_outside_corner():
    assert clamp_to_frame([70, 70, 4, 4], (64, 64)).tolist() == [64, 64, 0, 0]
    assert clamp_to_frame([-10, -9, 4, 4], (64, 64)).tolist() == [0, 0, 0, 0]
