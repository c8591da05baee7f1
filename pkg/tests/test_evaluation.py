import numpy as np
import pytest

from trajcast.datasets import DatasetConfig, Track, build_dataset
from trajcast.evaluation import (Detection, EvalConfig, IOU_THRESHOLDS,
                                 average_precision, evaluate,
                                 evaluate_trajectory_iou, map_range,
                                 speed_accuracy_sweep, static_detector_iou,
                                 trajectory_iou)
from trajcast.geometry import iou
from trajcast.model import TrainConfig, init_params, train
from trajcast.trajectory import GroundTruthTrack, Trajectory


def det(frame, box, cls=0, score=1.0):
    return Detection(frame, np.asarray(box, float), cls, score)


def gts(*items):
    """items: (frame_id, box, class_id)"""
    out = {}
    for frame, box, cls in items:
        out.setdefault(frame, []).append((np.asarray(box, float), cls))
    return out


def test_ap_perfect_detections():
    g = gts((0, [0, 0, 4, 4], 0), (1, [5, 5, 4, 4], 0))
    d = [det(0, [0, 0, 4, 4]), det(1, [5, 5, 4, 4])]
    assert average_precision(d, g, 0, 0.5) == 1.0


def test_ap_tp_then_fp_is_one():
    g = gts((0, [0, 0, 4, 4], 0))
    d = [det(0, [0, 0, 4, 4], score=0.9), det(0, [20, 20, 4, 4], score=0.1)]
    assert average_precision(d, g, 0, 0.5) == 1.0


def test_ap_fp_then_tp_is_half():
    g = gts((0, [0, 0, 4, 4], 0))
    d = [det(0, [20, 20, 4, 4], score=0.9), det(0, [0, 0, 4, 4], score=0.1)]
    assert average_precision(d, g, 0, 0.5) == 0.5


def test_ap_no_gt_of_class_is_none():
    g = gts((0, [0, 0, 4, 4], 1))
    assert average_precision([det(0, [0, 0, 4, 4], cls=0)], g, 0, 0.5) is None


def test_ap_score_rescaling_invariant():
    rng = np.random.default_rng(0)
    g = gts(*[(f, rng.uniform(0, 30, 4) + [0, 0, 5, 5], 0) for f in range(6)])
    d = [det(f, rng.uniform(0, 30, 4) + [0, 0, 5, 5], score=s)
         for f, s in zip(range(6), rng.uniform(0.1, 0.9, 6))]
    a = average_precision(d, g, 0, 0.3)
    d2 = [det(x.frame_id, x.box, x.class_id, 0.1 + 0.5 * x.score ** 3) for x in d]
    assert average_precision(d2, g, 0, 0.3) == pytest.approx(a)


def test_ap_duplicate_detection_never_helps():
    g = gts((0, [0, 0, 4, 4], 0), (1, [3, 3, 4, 4], 0))
    base = [det(0, [0, 0, 4, 4], score=0.9), det(1, [3, 3, 4, 4], score=0.8)]
    dup = base + [det(0, [0.2, 0, 4, 4], score=0.95)]
    assert average_precision(dup, g, 0, 0.5) <= average_precision(base, g, 0, 0.5)


def test_ap_threshold_validation():
    with pytest.raises(ValueError):
        average_precision([], {}, 0, 0.0)


def brute_force_ap(dets, gts_by_frame, class_id, iou_thr):
    """Independent reference: explicit loops, no arrays, 101-point AP."""
    cls_dets = [d for d in dets if d.class_id == class_id]
    order = sorted(range(len(cls_dets)), key=lambda i: -cls_dets[i].score)
    matched = set()
    gt_index = []
    for fid, items in gts_by_frame.items():
        for k, (box, cls) in enumerate(items):
            if cls == class_id:
                gt_index.append((fid, k, box))
    if not gt_index:
        return None
    flags = []
    for i in order:
        d = cls_dets[i]
        best_key, best_iou = None, 0.0
        for (fid, k, box) in gt_index:
            if fid != d.frame_id or (fid, k) in matched:
                continue
            v = iou(d.box, box)
            if v >= iou_thr and v > best_iou:
                best_key, best_iou = (fid, k), v
        if best_key is not None:
            matched.add(best_key)
            flags.append(True)
        else:
            flags.append(False)
    ap = 0.0
    for r100 in range(101):
        r = r100 / 100.0
        best_prec = 0.0
        tp = 0
        for n, flag in enumerate(flags, start=1):
            tp += flag
            recall = tp / len(gt_index)
            prec = tp / n
            if recall >= r:
                best_prec = max(best_prec, prec)
        ap += best_prec
    return ap / 101.0


def test_ap_matches_brute_force_on_random_instances():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(200):
        n_frames = int(rng.integers(1, 3))
        g = []
        for f in range(n_frames):
            for _ in range(int(rng.integers(0, 4))):
                g.append((f, np.append(rng.uniform(0, 24, 2), rng.uniform(4, 12, 2)),
                          int(rng.integers(0, 2))))
        gmap = gts(*g) if g else {}
        dets = []
        for f in range(n_frames):
            for _ in range(int(rng.integers(0, 6))):
                dets.append(det(f, np.append(rng.uniform(0, 24, 2),
                                             rng.uniform(4, 12, 2)),
                                cls=int(rng.integers(0, 2)),
                                score=float(rng.uniform(0, 1))))
        thr = float(rng.choice([0.3, 0.5, 0.75]))
        for cls in (0, 1):
            a = average_precision(dets, gmap, cls, thr)
            b = brute_force_ap(dets, gmap, cls, thr)
            assert (a is None) == (b is None)
            if a is not None:
                worst = max(worst, abs(a - b))
    assert worst < 1e-6


def test_map_range_perfect_and_empty():
    g = gts((0, [0, 0, 8, 8], 0), (0, [20, 20, 8, 8], 1))
    d = [det(0, [0, 0, 8, 8], cls=0), det(0, [20, 20, 8, 8], cls=1)]
    report = map_range(d, g)
    assert report.grand_map == 1.0
    assert all(v == 1.0 for v in report.map_per_threshold.values())
    empty = map_range([], g)
    assert empty.grand_map == 0.0


def test_map_range_iou_step_function():
    # 10x10 boxes shifted to make IoU exactly 9/11 > 0.8, fails at 0.85+
    g = gts((0, [0, 0, 10, 10], 0))
    d = [det(0, [1, 0, 10, 10])]
    target = iou([0, 0, 10, 10], [1, 0, 10, 10])
    report = map_range(d, g)
    for thr in IOU_THRESHOLDS:
        assert report.map_per_threshold[thr] == (1.0 if thr <= target else 0.0)


def test_map_range_grand_is_mean_of_thresholds():
    rng = np.random.default_rng(1)
    g = gts(*[(f, np.append(rng.uniform(0, 20, 2), [8, 8]), 0) for f in range(8)])
    d = [det(f, np.append(rng.uniform(0, 20, 2), [8, 8]), score=rng.uniform())
         for f in range(8)]
    report = map_range(d, g)
    assert report.grand_map == pytest.approx(
        np.mean([report.map_per_threshold[t] for t in IOU_THRESHOLDS]))


def test_report_csv_consistent(tmp_path):
    g = gts((0, [0, 0, 8, 8], 0))
    report = map_range([det(0, [0, 0, 8, 8])], g)
    csv = report.to_csv()
    lines = csv.strip().splitlines()
    assert lines[0].startswith("class_id")
    assert lines[-1].startswith("all,mean")
    assert f"{report.grand_map:.6f}" in lines[-1]


# ---------------------------------------------------------------------------
# trajectory IoU
# ---------------------------------------------------------------------------

def test_trajectory_iou_identical_is_one():
    boxes = np.stack([[2.0 * l, 0, 10, 10] for l in range(5)])
    traj = Trajectory(boxes[0], 0, np.diff(boxes, axis=0))
    gt = GroundTruthTrack(boxes, np.ones(5, bool), 0)
    assert trajectory_iou(traj, gt) == 1.0


def test_trajectory_iou_constant_offset():
    boxes = np.stack([[2.0 * l, 0, 10, 10] for l in range(5)])
    shifted = boxes + [1, 0, 0, 0]
    gt = GroundTruthTrack(shifted, np.ones(5, bool), 0)
    traj = Trajectory(boxes[0], 0, np.diff(boxes, axis=0))
    assert trajectory_iou(traj, gt) == pytest.approx(9 * 10 / (110.0))


def test_trajectory_iou_symmetric():
    rng = np.random.default_rng(2)
    a = rng.uniform(0, 20, (5, 4)) + [0, 0, 6, 6]
    b = rng.uniform(0, 20, (5, 4)) + [0, 0, 6, 6]
    va = trajectory_iou(Trajectory(a[0], 0, np.diff(a, axis=0)),
                        GroundTruthTrack(b, np.ones(5, bool), 0))
    vb = trajectory_iou(Trajectory(b[0], 0, np.diff(b, axis=0)),
                        GroundTruthTrack(a, np.ones(5, bool), 0))
    assert va == pytest.approx(vb)


def test_trajectory_iou_all_invalid_is_none():
    boxes = np.zeros((3, 4))
    traj = Trajectory([0, 0, 1, 1], 0, np.zeros((2, 4)))
    assert trajectory_iou(traj, GroundTruthTrack(boxes, np.zeros(3, bool), 0)) is None


# ---------------------------------------------------------------------------
# evaluation pipeline
# ---------------------------------------------------------------------------

def static_video(n=16, box=(20, 20, 12, 12)):
    from trajcast.datasets import AnnotatedVideo
    frames = np.zeros((n, 64, 64), np.uint8)
    x, y, w, h = box
    frames[:, y:y + h, x:x + w] = 255
    boxes = np.tile(np.asarray(box, float), (n, 1))
    return AnnotatedVideo("static", frames, [Track(boxes, np.ones(n, bool), 0, 0)])


def zero_params(T=4):
    params = init_params(feat_dim=64, T=T)
    for arr in params.arrays().values():
        arr[:] = 0.0
    return params


def test_evaluate_zero_net_static_gt_perfect():
    video = static_video()
    report, stats = evaluate(zero_params(), [video], "all_frames",
                             EvalConfig(T=4, jitter_sigma=0.0))
    assert report.grand_map == 1.0
    assert stats.n_extractions == 4  # 16 frames / T=4
    assert stats.n_frames == 16


def test_evaluate_keyframes_only_ignores_between_frames():
    # moving objects, zero net: keyframe detections exact (drifted endpoint
    # anticipations land too far away to fuse), in-between predictions drift
    train_v, _ = build_dataset(DatasetConfig(n_train=10, n_test=10, seed=0,
                                             boundary="exit"))
    videos = train_v[:4]
    kf_report, _ = evaluate(zero_params(8), videos, "keyframes_only",
                            EvalConfig(T=8, jitter_sigma=0.0))
    all_report, _ = evaluate(zero_params(8), videos, "all_frames",
                             EvalConfig(T=8, jitter_sigma=0.0))
    assert kf_report.grand_map == 1.0
    assert all_report.grand_map < kf_report.grand_map


def test_evaluate_mode_validation():
    with pytest.raises(ValueError):
        evaluate(zero_params(), [static_video()], "sometimes")


def test_evaluate_deterministic():
    train_v, _ = build_dataset(DatasetConfig(n_train=10, n_test=10, seed=0,
                                             boundary="exit"))
    cfg = EvalConfig(T=8, jitter_sigma=1.0, seed=3)
    r1, _ = evaluate(zero_params(8), train_v[:5], "all_frames", cfg)
    r2, _ = evaluate(zero_params(8), train_v[:5], "all_frames", cfg)
    assert r1.grand_map == r2.grand_map
    assert r1.ap == r2.ap


def test_static_detector_iou_sigma_zero():
    assert static_detector_iou([static_video()], 0.0) == 1.0


def test_evaluate_trajectory_iou_zero_offsets_matches_persistence():
    video = static_video()
    out = evaluate_trajectory_iou(zero_params(), [video],
                                  EvalConfig(T=4, jitter_sigma=0.0),
                                  zero_offsets=True)
    assert out["mean_trajectory_iou"] == 1.0  # static object, exact keyframes


def test_speed_accuracy_sweep_cost_column():
    train_v, test_v = build_dataset(DatasetConfig(n_train=10, n_test=10, seed=0,
                                                  boundary="bounce"))
    cfg = TrainConfig(iterations=5, T=8, seed=0, learning_rate=1e-4)
    rows = speed_accuracy_sweep(train_v, test_v[:5], [4, 2], cfg,
                                EvalConfig(jitter_sigma=0.0))
    assert [r.T for r in rows] == [2, 4]
    assert [r.cost_proxy for r in rows] == [0.5, 0.25]
    for r in rows:
        assert r.extractions_per_frame == pytest.approx(1.0 / r.T)
        assert r.extraction_wall_time > 0


def test_detections_jsonl_round_trip(tmp_path):
    from trajcast.evaluation import (read_detections_jsonl,
                                     write_detections_jsonl)
    dets = [det(("vid", 3), [1.5, 2.5, 8, 8], cls=4, score=0.75),
            det(7, [0, 0, 2, 2], cls=0, score=1.0)]
    path = tmp_path / "dets.jsonl"
    write_detections_jsonl(dets, path)
    back = read_detections_jsonl(path)
    assert len(back) == 2
    assert back[0].frame_id == ("vid", 3) and back[1].frame_id == 7
    assert np.array_equal(back[0].box, dets[0].box)
    assert back[0].class_id == 4 and back[0].score == 0.75
