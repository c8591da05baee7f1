"""Axis-aligned bounding-box arithmetic.

Boxes are ``(x, y, w, h)`` arrays: top-left corner plus size, in pixels,
all real-valued. Offsets are componentwise box differences ``(dx, dy, dw,
dh)``. Functions accept anything ``np.asarray`` understands and broadcast
over leading dimensions where documented.
"""

from __future__ import annotations

import numpy as np


def as_box(b) -> np.ndarray:
    """Coerce to a float64 ``(..., 4)`` box array."""
    arr = np.asarray(b, dtype=np.float64)
    if arr.shape[-1] != 4:
        raise ValueError(f"box must have 4 components, got shape {arr.shape}")
    return arr


def box_is_valid(b) -> bool:
    """True when all components are finite and width/height are >= 0."""
    arr = as_box(b)
    return bool(np.all(np.isfinite(arr)) and np.all(arr[..., 2:] >= 0))


def box_area(b) -> np.ndarray:
    arr = as_box(b)
    return arr[..., 2] * arr[..., 3]


def box_center(b) -> np.ndarray:
    """Center point ``(cx, cy)`` of a box, broadcasting over leading dims."""
    arr = as_box(b)
    return arr[..., :2] + 0.5 * arr[..., 2:]


def iou(a, b) -> np.ndarray | float:
    """Intersection over union of two boxes (or broadcastable box arrays).

    Degenerate pairs whose union has zero area score 0 so callers never
    divide by zero when matching. Areas use the same corner differences as
    the intersection, which keeps ``iou(a, a) == 1.0`` exact and the
    result within [0, 1] under floating point.
    """
    a = as_box(a)
    b = as_box(b)
    a2 = a[..., :2] + a[..., 2:]
    b2 = b[..., :2] + b[..., 2:]
    lo = np.maximum(a[..., :2], b[..., :2])
    hi = np.minimum(a2, b2)
    wh = np.clip(hi - lo, 0.0, None)
    inter = wh[..., 0] * wh[..., 1]
    area_a = (a2[..., 0] - a[..., 0]) * (a2[..., 1] - a[..., 1])
    area_b = (b2[..., 0] - b[..., 0]) * (b2[..., 1] - b[..., 1])
    union = area_a + area_b - inter
    out = np.where(union > 0.0, inter / np.where(union > 0.0, union, 1.0), 0.0)
    return float(out) if out.ndim == 0 else out


def iou_matrix(a, b) -> np.ndarray:
    """Pairwise IoU between ``(N, 4)`` and ``(M, 4)`` box sets -> ``(N, M)``."""
    a = np.atleast_2d(as_box(a))
    b = np.atleast_2d(as_box(b))
    return iou(a[:, None, :], b[None, :, :])


def offset_between(prev, nxt) -> np.ndarray:
    """Componentwise ``nxt - prev``."""
    return as_box(nxt) - as_box(prev)


def apply_offset(b, d) -> np.ndarray:
    """Componentwise ``b + d``; exact inverse of :func:`offset_between`.

    A result with negative width or height is returned as-is; callers that
    care check :func:`box_is_valid`.
    """
    return as_box(b) + np.asarray(d, dtype=np.float64)


def clamp_to_frame(b, frame_size) -> np.ndarray:
    """Intersect a box with ``[0, width] x [0, height]``.

    Width/height shrink as needed and never go negative; a fully-outside
    box collapses to a zero-area box at the nearest frame corner.
    """
    arr = as_box(b)
    width, height = float(frame_size[0]), float(frame_size[1])
    x1 = np.clip(arr[..., 0], 0.0, width)
    y1 = np.clip(arr[..., 1], 0.0, height)
    x2 = np.clip(arr[..., 0] + arr[..., 2], 0.0, width)
    y2 = np.clip(arr[..., 1] + arr[..., 3], 0.0, height)
    return np.stack([x1, y1, np.maximum(x2 - x1, 0.0), np.maximum(y2 - y1, 0.0)], axis=-1)
