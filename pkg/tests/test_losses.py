import numpy as np
import pytest

from trajcast.losses import (SmoothL1Config, loss_bag, loss_bag_delta, loss_sum,
                             loss_traj, loss_traj_sparse, smooth_l1,
                             verify_bag_sum_equivalence)
from trajcast.trajectory import (GroundTruthTrack, PseudoTrajectorySpec,
                                 Trajectory, linear_pseudo_track,
                                 parabola_pseudo_track)


def track(boxes, valid=None, class_id=0):
    boxes = np.asarray(boxes, dtype=float)
    if valid is None:
        valid = np.ones(len(boxes), bool)
    return GroundTruthTrack(boxes, valid, class_id)


def test_smooth_l1_values():
    assert smooth_l1(0.0) == (0.0, 0.0)
    assert smooth_l1(0.5) == (0.125, 0.5)
    assert smooth_l1(2.0) == (1.5, 1.0)
    assert smooth_l1(-2.0) == (1.5, -1.0)


def test_smooth_l1_continuous_at_beta():
    for beta in (0.5, 1.0, 3.0):
        inside_v, inside_d = smooth_l1(beta - 1e-12, beta)
        at_v, at_d = smooth_l1(beta, beta)
        assert at_v == pytest.approx(inside_v, abs=1e-9)
        assert at_d == pytest.approx(inside_d, abs=1e-9)


def test_smooth_l1_beta_validation():
    with pytest.raises(ValueError):
        SmoothL1Config(beta=0.0)


def test_loss_bag_perfect_is_zero():
    boxes = np.array([[0, 0, 4, 4], [1, 0, 4, 4], [2, 0, 4, 4]], float)
    assert loss_bag(boxes, track(boxes)).value == 0.0


def test_loss_bag_single_term():
    gt_boxes = np.array([[0, 0, 4, 4], [1, 0, 4, 4], [2, 0, 4, 4]], float)
    pred = gt_boxes.copy()
    pred[1, 0] += 0.5
    assert loss_bag(pred, track(gt_boxes)).value == pytest.approx(0.125)


def test_loss_bag_all_invalid_is_zero():
    boxes = np.random.default_rng(0).uniform(0, 10, (4, 4))
    gt = track(np.zeros((4, 4)), valid=np.zeros(4, bool))
    assert loss_bag(boxes, gt).value == 0.0


def test_loss_bag_length_mismatch():
    with pytest.raises(ValueError):
        loss_bag(np.zeros((3, 4)), track(np.zeros((5, 4))))


def test_loss_sum_zero_when_exact():
    gt_boxes = np.array([[0, 0, 4, 4], [2, 1, 4, 4], [4, 2, 4, 4]], float)
    traj = Trajectory(gt_boxes[0], 0, np.diff(gt_boxes, axis=0))
    assert loss_sum(traj, track(gt_boxes)).value == 0.0


def test_loss_sum_derived_single_offset():
    # stationary target, one unit offset: smooth-L1(-1) = 0.5
    gt = track([[0, 0, 4, 4], [0, 0, 4, 4]])
    traj = Trajectory([0, 0, 4, 4], 0, [[1, 0, 0, 0]])
    assert loss_sum(traj, gt).value == pytest.approx(0.5)


def test_loss_bag_delta_derived_single_offset():
    gt = track([[0, 0, 4, 4], [0, 0, 4, 4]])
    traj = Trajectory([0, 0, 4, 4], 0, [[1, 0, 0, 0]])
    assert loss_bag_delta(traj, gt).value == pytest.approx(0.5)


def test_loss_bag_delta_skips_terms_touching_invalid_frame():
    rng = np.random.default_rng(1)
    boxes = rng.uniform(0, 10, (5, 4))
    valid = np.array([True, True, False, True, True])
    traj = Trajectory(boxes[0], 0, rng.uniform(-2, 2, (4, 4)))
    full = loss_bag_delta(traj, track(boxes)).value
    masked = loss_bag_delta(traj, track(boxes, valid)).value
    # terms 2 and 3 (pairs touching frame 2) must vanish
    d = np.diff(boxes, axis=0) - traj.offsets
    v, _ = smooth_l1(d)
    assert masked == pytest.approx(full - v[1].sum() - v[2].sum())


def test_loss_traj_is_sum_of_parts():
    rng = np.random.default_rng(2)
    boxes = rng.uniform(0, 10, (6, 4))
    traj = Trajectory(boxes[0] + rng.normal(0, 1, 4), 0, rng.uniform(-2, 2, (5, 4)))
    gt = track(boxes)
    a, b, c = loss_sum(traj, gt), loss_bag_delta(traj, gt), loss_traj(traj, gt)
    assert c.value == pytest.approx(a.value + b.value)
    assert np.allclose(c.grad_offsets, a.grad_offsets + b.grad_offsets)
    assert np.allclose(c.grad_keyframe, a.grad_keyframe + b.grad_keyframe)
    # the two derived 0.5 cases add to 1.0
    gt2 = track([[0, 0, 4, 4], [0, 0, 4, 4]])
    traj2 = Trajectory([0, 0, 4, 4], 0, [[1, 0, 0, 0]])
    assert loss_traj(traj2, gt2).value == pytest.approx(1.0)


def test_loss_traj_weights():
    gt = track([[0, 0, 4, 4], [0, 0, 4, 4]])
    traj = Trajectory([0, 0, 4, 4], 0, [[1, 0, 0, 0]])
    assert loss_traj(traj, gt, weights=(1.0, 0.0)).value == pytest.approx(0.5)
    assert loss_traj(traj, gt, weights=(0.0, 2.0)).value == pytest.approx(1.0)


def test_sum_equals_bag_for_difference_offsets():
    rng = np.random.default_rng(3)
    for T in (1, 4, 8):
        pred_boxes = rng.uniform(-10, 50, (T + 1, 4))
        gt = track(rng.uniform(-10, 50, (T + 1, 4)),
                   valid=rng.random(T + 1) > 0.3)
        traj = Trajectory(pred_boxes[0], 0, np.diff(pred_boxes, axis=0))
        assert abs(loss_sum(traj, gt).value
                   - loss_bag(pred_boxes, gt).value) < 1e-9


def test_sum_differs_from_bag_for_non_difference_offsets():
    # negative control: perturbing one offset breaks the telescoping identity
    rng = np.random.default_rng(4)
    pred_boxes = rng.uniform(0, 40, (5, 4))
    gt = track(rng.uniform(0, 40, (5, 4)))
    offsets = np.diff(pred_boxes, axis=0)
    offsets[1, 0] += 5.0
    traj = Trajectory(pred_boxes[0], 0, offsets)
    assert abs(loss_sum(traj, gt).value - loss_bag(pred_boxes, gt).value) > 0.1


def test_bag_ignores_order_sum_does_not():
    # permute the GT frame order: the bag loss on matching permuted
    # predictions is unchanged, while a fixed trajectory's cumulative
    # loss is not (the ordering-sensitivity witness)
    rng = np.random.default_rng(5)
    boxes = rng.uniform(0, 40, (4, 4))
    gt_boxes = rng.uniform(0, 40, (4, 4))
    perm = [0, 2, 1, 3]
    bag = loss_bag(boxes, track(gt_boxes)).value
    bag_perm = loss_bag(boxes[perm], track(gt_boxes[perm])).value
    assert bag == pytest.approx(bag_perm, abs=1e-9)
    traj = Trajectory(boxes[0], 0, rng.uniform(-3, 3, (3, 4)))
    s = loss_sum(traj, track(gt_boxes)).value
    s_perm = loss_sum(traj, track(gt_boxes[perm])).value
    assert abs(s - s_perm) > 1e-6


def test_verify_equivalence_report():
    report = verify_bag_sum_equivalence(0, 1000)
    assert report["ok"] and report["max_abs_deviation"] < 1e-9
    with pytest.raises(ValueError):
        verify_bag_sum_equivalence(0, 0)


def test_losses_nonnegative_property():
    rng = np.random.default_rng(6)
    for _ in range(200):
        T = int(rng.integers(1, 9))
        gt = track(rng.uniform(0, 40, (T + 1, 4)), valid=rng.random(T + 1) > 0.3)
        traj = Trajectory(rng.uniform(0, 40, 4), 0, rng.uniform(-4, 4, (T, 4)))
        for fn in (loss_sum, loss_bag_delta, loss_traj):
            assert fn(traj, gt).value >= 0.0


def test_sparse_loss_zero_on_linear_track():
    start, end = np.array([0, 0, 8, 8.0]), np.array([8, 4, 8, 8.0])
    pseudo = linear_pseudo_track(start, end, 4)
    traj = Trajectory(start, 0, np.diff(pseudo.boxes, axis=0))
    spec = PseudoTrajectorySpec(kind="linear")
    assert loss_traj_sparse(traj, start, end, spec).value == pytest.approx(0.0)


def test_sparse_loss_matches_explicit_composition():
    rng = np.random.default_rng(7)
    start, end = rng.uniform(0, 30, 4), rng.uniform(0, 30, 4)
    traj = Trajectory(start + rng.normal(0, 1, 4), 0, rng.uniform(-2, 2, (4, 4)))
    spec = PseudoTrajectorySpec(kind="linear")
    via_op = loss_traj_sparse(traj, start, end, spec)
    explicit = loss_traj(traj, linear_pseudo_track(start, end, 4))
    assert via_op.value == pytest.approx(explicit.value)
    assert np.allclose(via_op.grad_offsets, explicit.grad_offsets)


def test_sparse_loss_parabola_zero_on_parabola_samples():
    start, end = np.array([-4, -4, 8, 8.0]), np.array([12, 4, 8, 8.0])
    pseudo = parabola_pseudo_track(start, end, 4, 8.0)
    traj = Trajectory(start, 0, np.diff(pseudo.boxes, axis=0))
    spec = PseudoTrajectorySpec(kind="parabola", focus_f=8.0)
    assert loss_traj_sparse(traj, start, end, spec).value < 1e-9


def test_sparse_loss_term_selection():
    rng = np.random.default_rng(8)
    start, end = rng.uniform(0, 30, 4), rng.uniform(0, 30, 4)
    traj = Trajectory(start, 0, rng.uniform(-2, 2, (4, 4)))
    spec = PseudoTrajectorySpec(kind="linear")
    both = loss_traj_sparse(traj, start, end, spec, terms="both").value
    s = loss_traj_sparse(traj, start, end, spec, terms="sum").value
    d = loss_traj_sparse(traj, start, end, spec, terms="bag_delta").value
    assert both == pytest.approx(s + d)
