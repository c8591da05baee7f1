"""Assigning ground-truth tracks to keyframe detections and trajectories.

Each prediction is matched to the ground-truth box with maximal IoU
(greedy per prediction, ties broken by lowest GT index), and a trajectory
inherits the identity and class of whatever its keyframe box matched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import iou_matrix
from .trajectory import GroundTruthTrack, Trajectory


@dataclass
class Assignment:
    matched_gt: int | None
    match_iou: float
    is_foreground: bool


def match_boxes(preds, gts, fg_threshold: float = 0.5) -> list[Assignment]:
    """Match each predicted box to its best-IoU ground-truth box.

    Empty GT yields all-background assignments. Deterministic: argmax
    with lowest-index tie-break.
    """
    if not 0.0 < fg_threshold <= 1.0:
        raise ValueError("fg_threshold must be in (0, 1]")
    preds = np.atleast_2d(np.asarray(preds, dtype=np.float64))
    if len(gts) == 0:
        return [Assignment(None, 0.0, False) for _ in range(len(preds))]
    ious = iou_matrix(preds, gts)
    out = []
    for row in ious:
        idx = int(np.argmax(row))  # argmax returns the first maximum
        out.append(Assignment(idx, float(row[idx]), bool(row[idx] >= fg_threshold)))
    return out


def window_target(track_boxes: np.ndarray, track_valid: np.ndarray,
                  class_id: int, start: int, T: int) -> GroundTruthTrack:
    """Slice a full-video track into a (T+1)-frame window target.

    Frames past the end of the video are marked invalid with placeholder
    boxes.
    """
    n = len(track_boxes)
    boxes = np.zeros((T + 1, 4))
    valid = np.zeros(T + 1, bool)
    hi = min(start + T + 1, n)
    boxes[:hi - start] = track_boxes[start:hi]
    valid[:hi - start] = track_valid[start:hi]
    return GroundTruthTrack(boxes, valid, class_id)


def assign_track_targets(trajectories: list[Trajectory], tracks,
                         fg_threshold: float = 0.5) -> list[GroundTruthTrack | None]:
    """Build per-trajectory regression targets from ground-truth tracks.

    The keyframe box of each trajectory is matched against the tracks'
    boxes at its start frame; the matched track's boxes over the window
    become the target (invalid where absent), and the trajectory adopts
    the matched class. Background matches yield ``None``.

    ``tracks`` is a sequence of objects with ``boxes`` (N, 4), ``valid``
    (N,) and ``class_id`` attributes spanning the full video.
    """
    targets: list[GroundTruthTrack | None] = []
    for traj in trajectories:
        t = traj.start_frame
        candidates = [k for k, tr in enumerate(tracks)
                      if t < len(tr.boxes) and tr.valid[t]]
        if not candidates:
            targets.append(None)
            continue
        gt_boxes = np.stack([tracks[k].boxes[t] for k in candidates])
        [assn] = match_boxes(traj.keyframe_box[None], gt_boxes, fg_threshold)
        if not assn.is_foreground:
            targets.append(None)
            continue
        tr = tracks[candidates[assn.matched_gt]]
        traj.class_id = int(tr.class_id)
        targets.append(window_target(tr.boxes, tr.valid, tr.class_id, t, traj.length))
    return targets
