import numpy as np
import pytest

from trajcast.geometry import offset_between
from trajcast.trajectory import (PseudoTrajectorySpec, Trajectory,
                                 linear_pseudo_track, parabola_pseudo_track,
                                 reconstruct_boxes, solve_parabola_vertex,
                                 stitch_segments)


def test_reconstruct_cumulative():
    traj = Trajectory([0, 0, 10, 10], 0, [[2, 0, 0, 0], [2, 0, 0, 0]])
    expected = [[0, 0, 10, 10], [2, 0, 10, 10], [4, 0, 10, 10]]
    assert reconstruct_boxes(traj).tolist() == expected


def test_reconstruct_zero_offsets():
    traj = Trajectory([3, 4, 5, 6], 1, np.zeros((5, 4)))
    assert np.all(reconstruct_boxes(traj) == [3, 4, 5, 6])


def test_reconstruct_inverts_offsets():
    rng = np.random.default_rng(0)
    offsets = rng.normal(0, 3, (8, 4))
    boxes = reconstruct_boxes(Trajectory([1, 2, 3, 4], 0, offsets))
    for l in range(1, 9):
        assert offset_between(boxes[l - 1], boxes[l]) == pytest.approx(offsets[l - 1])


def test_linear_track_midpoint():
    track = linear_pseudo_track([0, 0, 10, 10], [8, 4, 10, 14], 4)
    assert track.boxes[2].tolist() == [4, 2, 10, 12]


def test_linear_track_endpoints_exact():
    start, end = np.array([1.3, 2.7, 9.9, 8.1]), np.array([7.2, 0.4, 11.0, 6.5])
    track = linear_pseudo_track(start, end, 7)
    assert np.array_equal(track.boxes[0], start)
    assert np.array_equal(track.boxes[-1], end)
    assert track.valid.all()


def test_linear_track_degenerate_constant():
    track = linear_pseudo_track([5, 5, 4, 4], [5, 5, 4, 4], 3)
    assert np.all(track.boxes == [5, 5, 4, 4])


def test_linear_track_rejects_zero_length():
    with pytest.raises(ValueError):
        linear_pseudo_track([0, 0, 1, 1], [1, 1, 1, 1], 0)


def test_parabola_vertex_worked_case():
    v1, v2 = solve_parabola_vertex((0, 0), (16, 8), 8.0)
    assert (v1, v2) == (0.0, 0.0)


def test_parabola_midpoint_height():
    # centers (0,0) -> (16,8), f=8: sampled center at x=8 must sit at y=2
    track = parabola_pseudo_track([-4, -4, 8, 8], [12, 4, 8, 8], 4, 8.0)
    centers = track.boxes[:, :2] + track.boxes[:, 2:] / 2
    assert centers[2].tolist() == [8.0, 2.0]


def test_parabola_endpoints_and_membership():
    rng = np.random.default_rng(1)
    f = 8.0
    for _ in range(100):
        start = rng.uniform(0, 40, 4)
        end = rng.uniform(0, 40, 4)
        if abs((start[0] + start[2] / 2) - (end[0] + end[2] / 2)) < 1e-6:
            continue
        track = parabola_pseudo_track(start, end, 6, f)
        assert np.allclose(track.boxes[0], start, atol=1e-9)
        assert np.allclose(track.boxes[-1], end, atol=1e-9)
        v1, v2 = solve_parabola_vertex(start[:2] + start[2:] / 2,
                                       end[:2] + end[2:] / 2, f)
        centers = track.boxes[:, :2] + track.boxes[:, 2:] / 2
        assert np.allclose(centers[:, 1], (centers[:, 0] - v1) ** 2 / (4 * f) + v2,
                           atol=1e-9)
        # x sampling is affine in the step index
        assert np.allclose(np.diff(centers[:, 0], 2), 0.0, atol=1e-9)


def test_parabola_vertical_motion_falls_back_to_linear():
    start, end = [10, 0, 4, 4], [10, 20, 4, 4]
    track = parabola_pseudo_track(start, end, 5, 8.0)
    linear = linear_pseudo_track(start, end, 5)
    assert track.parabola_fallback
    assert np.allclose(track.boxes, linear.boxes)


def test_parabola_width_height_linear():
    track = parabola_pseudo_track([0, 0, 8, 8], [16, 8, 16, 4], 4, 8.0)
    assert np.allclose(track.boxes[:, 2], np.linspace(8, 16, 5))
    assert np.allclose(track.boxes[:, 3], np.linspace(8, 4, 5))


def test_stitch_linear_continuous():
    spec = PseudoTrajectorySpec(kind="linear")
    track = stitch_segments([[0, 0, 4, 4], [8, 8, 4, 4], [8, 16, 4, 4]],
                            [0, 4, 8], spec)
    assert len(track) == 9
    assert track.boxes[4].tolist() == [8, 8, 4, 4]


def test_stitch_parabola_alternating_signs_agree_at_keyframes():
    spec = PseudoTrajectorySpec(kind="parabola", focus_f=8.0, alternate_sign=True)
    kf_boxes = [[0, 0, 8, 8], [16, 8, 8, 8], [32, 16, 8, 8]]
    track = stitch_segments(kf_boxes, [0, 8, 16], spec)
    seg0 = parabola_pseudo_track(kf_boxes[0], kf_boxes[1], 8, 8.0)
    seg1 = parabola_pseudo_track(kf_boxes[1], kf_boxes[2], 8, -8.0)
    assert np.allclose(track.boxes[:9], seg0.boxes, atol=1e-9)
    assert np.allclose(track.boxes[8:], seg1.boxes, atol=1e-9)
    assert np.allclose(seg0.boxes[-1], seg1.boxes[0], atol=1e-9)


def test_stitch_two_keyframes_matches_single_segment():
    spec = PseudoTrajectorySpec(kind="parabola", focus_f=8.0)
    track = stitch_segments([[0, 0, 8, 8], [16, 8, 8, 8]], [0, 4], spec)
    single = parabola_pseudo_track([0, 0, 8, 8], [16, 8, 8, 8], 4, 8.0)
    assert np.allclose(track.boxes, single.boxes)


def test_stitch_rejects_nonincreasing_indices():
    spec = PseudoTrajectorySpec(kind="linear")
    with pytest.raises(ValueError):
        stitch_segments([[0, 0, 1, 1], [1, 1, 1, 1]], [4, 4], spec)


def test_spec_validation():
    with pytest.raises(ValueError):
        PseudoTrajectorySpec(kind="spline")
    with pytest.raises(ValueError):
        PseudoTrajectorySpec(kind="parabola", focus_f=0.0)
