"""Trajectories, box reconstruction, and pseudo-track generation.

A trajectory is a keyframe box plus an ordered run of T per-frame offsets;
summing the first l offsets onto the keyframe box recovers the box at
frame t+l. Pseudo tracks densify sparse keyframe annotations with either
straight-line interpolation or a parabola through the two keyframe
centers (width and height always interpolate linearly).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import as_box, box_center


@dataclass
class Trajectory:
    """Keyframe box + class + T offsets predicted for frames t+1..t+T."""

    keyframe_box: np.ndarray  # (4,)
    class_id: int
    offsets: np.ndarray  # (T, 4)
    start_frame: int = 0

    def __post_init__(self):
        self.keyframe_box = as_box(self.keyframe_box)
        self.offsets = np.asarray(self.offsets, dtype=np.float64).reshape(-1, 4)
        if len(self.offsets) < 1:
            raise ValueError("trajectory needs at least one offset")
        if self.class_id < 0:
            raise ValueError("class_id must be >= 0")

    @property
    def length(self) -> int:
        return len(self.offsets)


@dataclass
class GroundTruthTrack:
    """Per-frame target boxes over a window of T+1 frames.

    ``valid[l]`` is False where no annotation exists; the box stored there
    is a placeholder that must never be read. ``parabola_fallback`` marks
    pseudo tracks that degraded to linear interpolation because the two
    keyframe centers share an x coordinate.
    """

    boxes: np.ndarray  # (T+1, 4)
    valid: np.ndarray  # (T+1,) bool
    class_id: int
    parabola_fallback: bool = False

    def __post_init__(self):
        self.boxes = np.asarray(self.boxes, dtype=np.float64).reshape(-1, 4)
        self.valid = np.asarray(self.valid, dtype=bool).reshape(-1)
        if len(self.boxes) != len(self.valid):
            raise ValueError("boxes and valid must have equal length")

    def __len__(self) -> int:
        return len(self.boxes)


@dataclass
class PseudoTrajectorySpec:
    """How to densify keyframe-only annotations."""

    kind: str = "linear"  # "linear" | "parabola"
    focus_f: float = 8.0
    alternate_sign: bool = True

    def __post_init__(self):
        if self.kind not in ("linear", "parabola"):
            raise ValueError(f"unknown pseudo-trajectory kind {self.kind!r}")
        if self.kind == "parabola" and self.focus_f == 0:
            raise ValueError("parabola focus must be nonzero")


def reconstruct_boxes(traj: Trajectory) -> np.ndarray:
    """Boxes at frames t..t+T: keyframe box plus cumulative offset sums."""
    out = np.empty((traj.length + 1, 4))
    out[0] = traj.keyframe_box
    out[1:] = traj.keyframe_box + np.cumsum(traj.offsets, axis=0)
    return out


def linear_pseudo_track(start, end, T: int, class_id: int = 0) -> GroundTruthTrack:
    """Straight-line box interpolation; endpoints match start/end exactly."""
    if T < 1:
        raise ValueError("T must be >= 1")
    start = as_box(start)
    end = as_box(end)
    frac = np.arange(T + 1, dtype=np.float64)[:, None] / T
    boxes = start + frac * (end - start)
    boxes[0] = start
    boxes[-1] = end
    return GroundTruthTrack(boxes, np.ones(T + 1, bool), class_id)


def solve_parabola_vertex(c0, c1, focus_f: float) -> tuple[float, float]:
    """Vertex (v1, v2) of ``y = (x - v1)^2 / (4f) + v2`` through two centers.

    Raises ValueError when the centers share an x coordinate (the system
    is singular there).
    """
    x0, y0 = float(c0[0]), float(c0[1])
    x1, y1 = float(c1[0]), float(c1[1])
    if x1 == x0:
        raise ValueError("parabola is singular for vertical motion (equal center x)")
    v1 = 0.5 * (x0 + x1) - 2.0 * focus_f * (y1 - y0) / (x1 - x0)
    v2 = y0 - (x0 - v1) ** 2 / (4.0 * focus_f)
    return v1, v2


def parabola_pseudo_track(start, end, T: int, focus_f: float = 8.0,
                          class_id: int = 0) -> GroundTruthTrack:
    """Pseudo track whose centers ride a parabola through both keyframe centers.

    Centers are sampled at T+1 x-values evenly spaced between the two
    keyframe centers; width and height interpolate linearly. When both
    centers share an x coordinate the parabola is singular and the track
    falls back to :func:`linear_pseudo_track` with ``parabola_fallback``
    set.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    if focus_f == 0:
        raise ValueError("focus_f must be nonzero")
    start = as_box(start)
    end = as_box(end)
    c0 = box_center(start)
    c1 = box_center(end)
    try:
        v1, v2 = solve_parabola_vertex(c0, c1, focus_f)
    except ValueError:
        track = linear_pseudo_track(start, end, T, class_id)
        track.parabola_fallback = True
        return track

    frac = np.arange(T + 1, dtype=np.float64) / T
    xs = c0[0] + frac * (c1[0] - c0[0])
    ys = (xs - v1) ** 2 / (4.0 * focus_f) + v2
    wh = start[2:] + frac[:, None] * (end[2:] - start[2:])
    boxes = np.empty((T + 1, 4))
    boxes[:, 0] = xs - 0.5 * wh[:, 0]
    boxes[:, 1] = ys - 0.5 * wh[:, 1]
    boxes[:, 2:] = wh
    boxes[0] = start
    boxes[-1] = end
    return GroundTruthTrack(boxes, np.ones(T + 1, bool), class_id)


def stitch_segments(keyframe_boxes, keyframe_indices,
                    spec: PseudoTrajectorySpec,
                    class_id: int = 0) -> GroundTruthTrack:
    """Concatenate per-segment pseudo tracks over a multi-keyframe window.

    With ``spec.kind == "parabola"`` and ``alternate_sign``, segment i uses
    focus ``(-1)^i * focus_f`` so consecutive arcs bend in opposite
    directions. Shared keyframe boxes appear exactly once in the output.
    The returned track spans frames ``keyframe_indices[0]`` through
    ``keyframe_indices[-1]`` inclusive.
    """
    boxes = [as_box(b) for b in keyframe_boxes]
    indices = [int(i) for i in keyframe_indices]
    if len(boxes) < 2 or len(boxes) != len(indices):
        raise ValueError("need >= 2 keyframes with matching indices")
    if any(b - a <= 0 for a, b in zip(indices, indices[1:])):
        raise ValueError("keyframe indices must be strictly increasing")

    pieces = []
    fallback = False
    for i in range(len(boxes) - 1):
        seg_T = indices[i + 1] - indices[i]
        if spec.kind == "linear":
            seg = linear_pseudo_track(boxes[i], boxes[i + 1], seg_T, class_id)
        else:
            f = spec.focus_f * ((-1) ** i if spec.alternate_sign else 1)
            seg = parabola_pseudo_track(boxes[i], boxes[i + 1], seg_T, f, class_id)
            fallback = fallback or seg.parabola_fallback
        # drop the shared leading keyframe of every segment after the first
        pieces.append(seg.boxes if i == 0 else seg.boxes[1:])
    all_boxes = np.concatenate(pieces, axis=0)
    track = GroundTruthTrack(all_boxes, np.ones(len(all_boxes), bool), class_id)
    track.parabola_fallback = fallback
    return track
