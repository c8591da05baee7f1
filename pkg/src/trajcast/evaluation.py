"""Detection metrics and the keyframe/trajectory evaluation pipeline.

Average precision follows the COCO convention: detections sorted by
descending score (input order on ties), greedy same-class matching
against unmatched ground truth at an IoU threshold, 101-point
interpolated AP, mAP averaged over thresholds 0.50:0.05:0.95.

The evaluation pipeline runs the oracle detector on keyframes sampled
every T frames and fills the frames in between with the head's trajectory
predictions. At every keyframe after the first, the trajectory box
anticipated from the previous keyframe is fused (averaged) with the
current detection when the two agree; this is the channel through which
trajectory quality influences keyframe detection, standing in for the
shared-backbone effect of a trainable detector.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, replace

import numpy as np

from .geometry import iou
from .model import (FeatureExtractor, OracleDetectorConfig, TrajectoryHeadParams,
                    oracle_detect, predict_trajectory, train)
from .trajectory import GroundTruthTrack, Trajectory, reconstruct_boxes

IOU_THRESHOLDS = tuple((50 + 5 * k) / 100 for k in range(10))  # 0.50 .. 0.95

RECALL_GRID = np.arange(101) / 100.0


@dataclass
class Detection:
    frame_id: object  # hashable frame key, e.g. (video_id, frame_index)
    box: np.ndarray
    class_id: int
    score: float

    def __post_init__(self):
        self.box = np.asarray(self.box, dtype=np.float64).reshape(4)
        if not np.isfinite(self.score):
            raise ValueError("detection score must be finite")


@dataclass
class MetricReport:
    """AP per (class, threshold), per-threshold mAP, grand mAP, match counts."""

    ap: dict  # (class_id, thr) -> float | None
    map_per_threshold: dict  # thr -> float
    grand_map: float
    counts: dict  # (class_id, thr) -> {"tp": int, "fp": int, "fn": int}
    classes: tuple

    def to_json_dict(self) -> dict:
        return {
            "grand_map": self.grand_map,
            "map_per_threshold": {f"{t:.2f}": v for t, v in
                                  self.map_per_threshold.items()},
            "ap": {f"{c}:{t:.2f}": v for (c, t), v in self.ap.items()},
            "counts": {f"{c}:{t:.2f}": v for (c, t), v in self.counts.items()},
            "classes": list(self.classes),
        }

    def to_csv(self) -> str:
        lines = ["class_id,iou_threshold,ap,tp,fp,fn"]
        for (c, t) in sorted(self.ap):
            ap = self.ap[(c, t)]
            n = self.counts[(c, t)]
            ap_str = "" if ap is None else f"{ap:.6f}"
            lines.append(f"{c},{t:.2f},{ap_str},{n['tp']},{n['fp']},{n['fn']}")
        lines.append(f"all,mean,{self.grand_map:.6f},,,")
        return "\n".join(lines) + "\n"


def write_detections_jsonl(dets: list[Detection], path) -> None:
    """One detection per line: frame_id, box, class_id, score."""
    with open(path, "w") as f:
        for d in dets:
            rec = {"frame_id": list(d.frame_id) if isinstance(d.frame_id, tuple)
                   else d.frame_id,
                   "box": d.box.tolist(), "class_id": d.class_id,
                   "score": d.score}
            f.write(json.dumps(rec, sort_keys=True) + "\n")


def read_detections_jsonl(path) -> list[Detection]:
    out = []
    with open(path) as f:
        for line in f:
            if not line.strip():
                continue
            rec = json.loads(line)
            fid = rec["frame_id"]
            out.append(Detection(tuple(fid) if isinstance(fid, list) else fid,
                                 np.asarray(rec["box"], dtype=np.float64),
                                 int(rec["class_id"]), float(rec["score"])))
    return out


def _match_detections(dets: list[Detection], gts_by_frame: dict, class_id: int,
                      iou_thr: float):
    """Greedy TP/FP labeling in score order; returns (tp_flags, n_gt)."""
    cls_dets = [d for d in dets if d.class_id == class_id]
    order = sorted(range(len(cls_dets)), key=lambda i: -cls_dets[i].score)
    gt_pool = {}
    n_gt = 0
    for fid, items in gts_by_frame.items():
        boxes = [np.asarray(b, dtype=np.float64) for b, c in items if c == class_id]
        if boxes:
            gt_pool[fid] = [[b, False] for b in boxes]
            n_gt += len(boxes)
    tp = np.zeros(len(cls_dets), bool)
    for rank, i in enumerate(order):
        det = cls_dets[i]
        best, best_iou = None, 0.0
        for entry in gt_pool.get(det.frame_id, ()):
            if entry[1]:
                continue
            v = iou(det.box, entry[0])
            if v >= iou_thr and v > best_iou:
                best, best_iou = entry, v
        if best is not None:
            best[1] = True
            tp[rank] = True
    return tp, n_gt


def _interp_ap(tp_sorted: np.ndarray, n_gt: int) -> float:
    """101-point interpolated AP from score-ordered TP flags."""
    if n_gt == 0:
        raise ValueError("AP undefined without ground truth")
    if len(tp_sorted) == 0:
        return 0.0
    cum_tp = np.cumsum(tp_sorted)
    recall = cum_tp / n_gt
    precision = cum_tp / np.arange(1, len(tp_sorted) + 1)
    # precision envelope: max precision at recall >= r
    env = np.maximum.accumulate(precision[::-1])[::-1]
    ap = 0.0
    for r in RECALL_GRID:
        idx = np.searchsorted(recall, r, side="left")
        ap += env[idx] if idx < len(env) else 0.0
    return ap / len(RECALL_GRID)


def average_precision(dets: list[Detection], gts_by_frame: dict, class_id: int,
                      iou_thr: float) -> float | None:
    """AP for one class at one IoU threshold; None when the class has no GT.

    ``gts_by_frame`` maps frame keys to lists of ``(box, class_id)``.
    """
    if not 0.0 < iou_thr <= 1.0:
        raise ValueError("iou_thr must be in (0, 1]")
    tp, n_gt = _match_detections(dets, gts_by_frame, class_id, iou_thr)
    if n_gt == 0:
        return None
    return _interp_ap(tp, n_gt)


def map_range(dets: list[Detection], gts_by_frame: dict,
              thresholds=IOU_THRESHOLDS) -> MetricReport:
    """Full report: AP per class per threshold, per-threshold mAP, grand mAP."""
    classes = sorted({c for items in gts_by_frame.values() for _, c in items})
    ap = {}
    counts = {}
    map_per_thr = {}
    for thr in thresholds:
        per_class = []
        for c in classes:
            tp, n_gt = _match_detections(dets, gts_by_frame, c, thr)
            value = _interp_ap(tp, n_gt) if n_gt else None
            ap[(c, thr)] = value
            counts[(c, thr)] = {"tp": int(tp.sum()),
                                "fp": int(len(tp) - tp.sum()),
                                "fn": int(n_gt - tp.sum())}
            if value is not None:
                per_class.append(value)
        map_per_thr[thr] = float(np.mean(per_class)) if per_class else 0.0
    grand = float(np.mean([map_per_thr[t] for t in thresholds]))
    return MetricReport(ap, map_per_thr, grand, counts, tuple(classes))


def trajectory_iou(pred: Trajectory | np.ndarray, gt: GroundTruthTrack) -> float | None:
    """Mean per-frame IoU over the valid frames of the window (l = 0..T)."""
    boxes = reconstruct_boxes(pred) if isinstance(pred, Trajectory) else \
        np.asarray(pred, dtype=np.float64)
    if len(boxes) != len(gt):
        raise ValueError("prediction and track cover different windows")
    if not gt.valid.any():
        return None
    vals = [iou(boxes[l], gt.boxes[l]) for l in np.flatnonzero(gt.valid)]
    return float(np.mean(vals))


# ---------------------------------------------------------------------------
# Evaluation pipeline
# ---------------------------------------------------------------------------

@dataclass
class EvalConfig:
    T: int = 8
    jitter_sigma: float = 0.0
    seed: int = 0
    fusion_iou_threshold: float = 0.25
    feat_grid: int = 8
    # anticipated boxes get a confidence that decays with the horizon, so
    # direct detections outrank them and long-range guesses rank last
    anticipation_score_decay: float = 0.05


@dataclass
class EvalStats:
    n_frames: int = 0
    n_extractions: int = 0
    extraction_wall_time: float = 0.0
    detections: list | None = None  # the scored detections behind the report


def _video_detections(params: TrajectoryHeadParams, video, cfg: EvalConfig,
                      extractor: FeatureExtractor, rng) -> dict[int, list]:
    """Per-frame (box, class, score) lists for one video.

    Keyframes carry oracle detections, fused with the previous window's
    endpoint anticipation when the two overlap; in-between frames carry
    the trajectory predictions.
    """
    T = cfg.T
    n = video.num_frames
    det_cfg = OracleDetectorConfig(jitter_sigma=cfg.jitter_sigma)
    per_frame: dict[int, list] = defaultdict(list)
    incoming: list = []  # (box, class) anticipated at the current keyframe
    for kf in range(0, n, T):
        gt_boxes = [tr.boxes[kf] for tr in video.tracks if tr.valid[kf]]
        gt_classes = [tr.class_id for tr in video.tracks if tr.valid[kf]]
        boxes, classes, scores = oracle_detect(gt_boxes, gt_classes, det_cfg, rng)
        fused = []
        for box, cls, score in zip(boxes, classes, scores):
            best, best_iou = None, cfg.fusion_iou_threshold
            for pbox, pcls in incoming:
                if pcls != cls:
                    continue
                v = iou(box, pbox)
                if v >= best_iou:
                    best, best_iou = pbox, v
            if best is not None:
                box = 0.5 * (box + best)
            fused.append((box, cls, score))
            per_frame[kf].append((box, cls, score))
        incoming = []
        T_eff = min(T, n - 1 - kf)
        if T_eff < 1:
            continue
        W, H = video.frame_size
        for box, cls, score in fused:
            feat = extractor.extract(video.frames[kf], box,
                                     cache_key=(video.video_id, kf))
            traj = predict_trajectory(params, box, feat, cls, kf)
            pred_boxes = reconstruct_boxes(traj)
            for l in range(1, T_eff + 1):
                pb = pred_boxes[l]
                if l == T and kf + T < n:
                    incoming.append((pb, cls))
                    continue
                if pb[0] + pb[2] <= 0 or pb[0] >= W or pb[1] + pb[3] <= 0 \
                        or pb[1] >= H:
                    continue  # anticipated the object out of the frame
                per_frame[kf + l].append(
                    (pb, cls, score - cfg.anticipation_score_decay * l))
    return per_frame


def evaluate(params: TrajectoryHeadParams, videos, mode: str = "all_frames",
             cfg: EvalConfig | None = None,
             extractor: FeatureExtractor | None = None):
    """mAP of the keyframe-detect-then-anticipate pipeline on a split.

    ``mode`` is ``"keyframes_only"`` (metric restricted to the sampled
    keyframes) or ``"all_frames"``. Returns ``(MetricReport, EvalStats)``.
    """
    if mode not in ("keyframes_only", "all_frames"):
        raise ValueError(f"unknown eval mode {mode!r}")
    cfg = cfg or EvalConfig()
    extractor = extractor or FeatureExtractor(cfg.feat_grid)
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 4)))
    calls0, time0 = extractor.n_calls, extractor.wall_time
    dets: list[Detection] = []
    gts: dict = {}
    n_frames = 0
    for video in videos:
        keyframes = set(range(0, video.num_frames, cfg.T))
        per_frame = _video_detections(params, video, cfg, extractor, rng)
        for t in range(video.num_frames):
            if mode == "keyframes_only" and t not in keyframes:
                continue
            key = (video.video_id, t)
            n_frames += 1
            gts[key] = [(tr.boxes[t], tr.class_id) for tr in video.tracks
                        if tr.valid[t]]
            for box, cls, score in per_frame.get(t, ()):
                dets.append(Detection(key, box, cls, score))
    report = map_range(dets, gts)
    total_frames = sum(v.num_frames for v in videos)
    stats = EvalStats(total_frames, extractor.n_calls - calls0,
                      extractor.wall_time - time0, dets)
    return report, stats


def evaluate_trajectory_iou(params: TrajectoryHeadParams, videos,
                            cfg: EvalConfig | None = None,
                            zero_offsets: bool = False) -> dict:
    """Mean trajectory IoU over all keyframe windows of a split.

    With ``zero_offsets`` the head is bypassed and the keyframe box is
    held for the whole window (the persistence baseline).
    """
    cfg = cfg or EvalConfig()
    extractor = FeatureExtractor(cfg.feat_grid)
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 4)))
    det_cfg = OracleDetectorConfig(jitter_sigma=cfg.jitter_sigma)
    per_window = []
    for video in videos:
        n = video.num_frames
        for kf in range(0, n, cfg.T):
            if min(cfg.T, n - 1 - kf) < 1:
                continue
            gt_boxes = [tr.boxes[kf] for tr in video.tracks if tr.valid[kf]]
            gt_classes = [tr.class_id for tr in video.tracks if tr.valid[kf]]
            boxes, classes, _ = oracle_detect(gt_boxes, gt_classes, det_cfg, rng)
            tracks = [tr for tr in video.tracks if tr.valid[kf]]
            for box, cls, tr in zip(boxes, classes, tracks):
                if zero_offsets:
                    traj = Trajectory(box, cls, np.zeros((cfg.T, 4)), kf)
                else:
                    feat = extractor.extract(video.frames[kf], box,
                                             cache_key=(video.video_id, kf))
                    traj = predict_trajectory(params, box, feat, cls, kf)
                hi = min(kf + cfg.T + 1, n)
                gt_window = np.zeros((cfg.T + 1, 4))
                valid = np.zeros(cfg.T + 1, bool)
                gt_window[:hi - kf] = tr.boxes[kf:hi]
                valid[:hi - kf] = tr.valid[kf:hi]
                v = trajectory_iou(traj, GroundTruthTrack(gt_window, valid, cls))
                if v is not None:
                    per_window.append(v)
    return {"mean_trajectory_iou": float(np.mean(per_window)),
            "n_windows": len(per_window)}


def static_detector_iou(videos, jitter_sigma: float, seed: int = 0) -> float:
    """Mean IoU of per-frame oracle detections against ground truth.

    The no-anticipation reference: the detector runs on every frame and no
    trajectory model is involved, so this measures raw keyframe-detector
    quality.
    """
    rng = np.random.default_rng(np.random.SeedSequence((seed, 4)))
    det_cfg = OracleDetectorConfig(jitter_sigma=jitter_sigma)
    vals = []
    for video in videos:
        for t in range(video.num_frames):
            gt_boxes = [tr.boxes[t] for tr in video.tracks if tr.valid[t]]
            classes = [tr.class_id for tr in video.tracks if tr.valid[t]]
            boxes, _, _ = oracle_detect(gt_boxes, classes, det_cfg, rng)
            vals.extend(iou(b, g) for b, g in zip(boxes, gt_boxes))
    return float(np.mean(vals))


# ---------------------------------------------------------------------------
# Speed-accuracy sweep
# ---------------------------------------------------------------------------

@dataclass
class SweepRow:
    T: int
    cost_proxy: float  # feature extractions per frame = 1/T
    extractions_per_frame: float  # measured
    all_frames_map: float
    extraction_wall_time: float


def speed_accuracy_sweep(train_videos, test_videos, T_values, train_cfg,
                         eval_cfg: EvalConfig | None = None) -> list[SweepRow]:
    """Train and evaluate one model per trajectory length.

    ``train_cfg`` is a template ``TrainConfig``; its T is overridden per
    sweep point. Rows come back sorted by T ascending.
    """
    eval_cfg = eval_cfg or EvalConfig()
    rows = []
    for T in sorted(int(t) for t in T_values):
        cfg_t = replace(train_cfg, T=T)
        params, _ = train(train_videos, cfg_t)
        ecfg = EvalConfig(T=T, jitter_sigma=eval_cfg.jitter_sigma,
                          seed=eval_cfg.seed,
                          fusion_iou_threshold=eval_cfg.fusion_iou_threshold,
                          feat_grid=eval_cfg.feat_grid)
        report, stats = evaluate(params, test_videos, "all_frames", ecfg)
        rows.append(SweepRow(T, 1.0 / T,
                             stats.n_extractions / stats.n_frames,
                             report.grand_map, stats.extraction_wall_time))
    return rows
