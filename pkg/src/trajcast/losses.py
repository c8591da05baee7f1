"""Trajectory regression losses with analytic offset gradients.

Four losses over a window of T+1 frames:

* ``loss_bag``  -- smooth-L1 between each predicted and target box,
  order-blind.
* ``loss_sum``  -- smooth-L1 between each target displacement from the
  keyframe and the running sum of predicted offsets; the running sum
  couples every frame to all earlier offsets, which is what enforces
  temporal ordering.
* ``loss_bag_delta`` -- smooth-L1 between predicted offsets and the
  target's consecutive-frame offsets.
* ``loss_traj`` -- weighted sum of the previous two (equal weights by
  default).

All losses sum over coordinates and timesteps; batch averaging is the
trainer's job. Frames with ``valid == False`` contribute nothing; the
delta loss additionally needs both frames of a pair valid, since the
target offset is undefined otherwise.

When predicted offsets are the consecutive differences of some box
sequence, the running sums telescope and ``loss_sum`` equals ``loss_bag``
on that sequence; :func:`verify_bag_sum_equivalence` machine-checks this.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import as_box
from .trajectory import (GroundTruthTrack, PseudoTrajectorySpec, Trajectory,
                         linear_pseudo_track, parabola_pseudo_track)


@dataclass
class SmoothL1Config:
    """Transition point of the piecewise loss; quadratic inside |x| < beta."""

    beta: float = 1.0

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")


@dataclass
class LossResult:
    """Loss value plus gradients in the offset parameterization.

    ``grad_offsets[k]`` is d(loss)/d(offset at step k+1); ``grad_keyframe``
    is d(loss)/d(keyframe box), computed but unused while the keyframe
    detector is frozen.
    """

    value: float
    grad_offsets: np.ndarray  # (T, 4)
    grad_keyframe: np.ndarray  # (4,)

    def __add__(self, other: "LossResult") -> "LossResult":
        return LossResult(self.value + other.value,
                          self.grad_offsets + other.grad_offsets,
                          self.grad_keyframe + other.grad_keyframe)


def _beta(cfg) -> float:
    if cfg is None:
        return 1.0
    if isinstance(cfg, SmoothL1Config):
        return cfg.beta
    return float(cfg)


def smooth_l1(x, cfg=None):
    """Elementwise smooth-L1 value and derivative.

    ``0.5 x^2 / beta`` for |x| < beta, ``|x| - 0.5 beta`` outside;
    the derivative is ``x / beta`` inside and ``sign(x)`` outside,
    continuous at the transition.
    """
    beta = _beta(cfg)
    x = np.asarray(x, dtype=np.float64)
    inside = np.abs(x) < beta
    value = np.where(inside, 0.5 * x * x / beta, np.abs(x) - 0.5 * beta)
    deriv = np.where(inside, x / beta, np.sign(x))
    if value.ndim == 0:
        return float(value), float(deriv)
    return value, deriv


# ---------------------------------------------------------------------------
# Batched core. Shapes: offsets (B, T, 4), keyframes (B, 4),
# gt_boxes (B, T+1, 4), valid (B, T+1). The per-track public API wraps
# this with B = 1 so there is a single gradient implementation.
# ---------------------------------------------------------------------------

def _sum_terms(offsets, keyframes, gt_boxes, valid, beta):
    B, T, _ = offsets.shape
    cum0 = np.concatenate([np.zeros((B, 1, 4)), np.cumsum(offsets, axis=1)], axis=1)
    resid = (gt_boxes - keyframes[:, None, :]) - cum0
    value, deriv = smooth_l1(resid, beta)
    m = valid[:, :, None]
    values = np.sum(value * m, axis=(1, 2))
    g = deriv * m
    # d/d(offset_k) = -sum over valid frames l >= k of deriv_l
    suffix = np.cumsum(g[:, ::-1], axis=1)[:, ::-1]
    return values, -suffix[:, 1:], -g.sum(axis=1)


def _bag_delta_terms(offsets, gt_boxes, valid, beta):
    gt_delta = gt_boxes[:, 1:] - gt_boxes[:, :-1]
    pair = (valid[:, 1:] & valid[:, :-1])[:, :, None]
    value, deriv = smooth_l1(gt_delta - offsets, beta)
    values = np.sum(value * pair, axis=(1, 2))
    grad = -deriv * pair
    return values, grad, np.zeros((offsets.shape[0], 4))


def loss_batch(kind, offsets, keyframes, gt_boxes, valid, beta=1.0,
               traj_weights=(1.0, 1.0)):
    """Vectorized loss over a batch of windows.

    Returns ``(values (B,), grad_offsets (B, T, 4), grad_keyframes (B, 4))``.
    ``kind`` is one of ``bag``, ``sum``, ``bag_delta``, ``traj``. For the
    offset parameterization, ``bag`` on reconstructed boxes telescopes to
    ``sum``, so both kinds share the same computation.
    """
    offsets = np.asarray(offsets, dtype=np.float64)
    keyframes = np.asarray(keyframes, dtype=np.float64)
    gt_boxes = np.asarray(gt_boxes, dtype=np.float64)
    valid = np.asarray(valid, dtype=bool)
    if kind in ("bag", "sum"):
        return _sum_terms(offsets, keyframes, gt_boxes, valid, beta)
    if kind == "bag_delta":
        return _bag_delta_terms(offsets, gt_boxes, valid, beta)
    if kind == "traj":
        ws, wd = traj_weights
        v1, g1, k1 = _sum_terms(offsets, keyframes, gt_boxes, valid, beta)
        v2, g2, k2 = _bag_delta_terms(offsets, gt_boxes, valid, beta)
        return ws * v1 + wd * v2, ws * g1 + wd * g2, ws * k1 + wd * k2
    raise ValueError(f"unknown loss kind {kind!r}")


def _single(kind, offsets, keyframe, gt: GroundTruthTrack, cfg,
            traj_weights=(1.0, 1.0)) -> LossResult:
    offsets = np.asarray(offsets, dtype=np.float64).reshape(1, -1, 4)
    if len(gt) != offsets.shape[1] + 1:
        raise ValueError(f"track length {len(gt)} does not match T={offsets.shape[1]}")
    values, grads, gradk = loss_batch(kind, offsets, np.asarray(keyframe).reshape(1, 4),
                                      gt.boxes[None], gt.valid[None], _beta(cfg),
                                      traj_weights)
    return LossResult(float(values[0]), grads[0], gradk[0])


def loss_bag(pred_boxes, gt: GroundTruthTrack, cfg=None) -> LossResult:
    """Order-blind smooth-L1 between predicted and target boxes.

    ``pred_boxes`` is the (T+1, 4) box sequence; gradients are reported in
    the offset parameterization of that sequence (first box = keyframe,
    consecutive differences = offsets).
    """
    pred_boxes = np.asarray(pred_boxes, dtype=np.float64).reshape(-1, 4)
    if len(pred_boxes) != len(gt):
        raise ValueError(f"got {len(pred_boxes)} boxes for track of length {len(gt)}")
    offsets = np.diff(pred_boxes, axis=0)
    return _single("bag", offsets, pred_boxes[0], gt, cfg)


def loss_sum(traj: Trajectory, gt: GroundTruthTrack, cfg=None) -> LossResult:
    """Cumulative-offset loss; running sums enforce temporal ordering."""
    return _single("sum", traj.offsets, traj.keyframe_box, gt, cfg)


def loss_bag_delta(traj: Trajectory, gt: GroundTruthTrack, cfg=None) -> LossResult:
    """Per-step offset loss against target consecutive-frame offsets."""
    return _single("bag_delta", traj.offsets, traj.keyframe_box, gt, cfg)


def loss_traj(traj: Trajectory, gt: GroundTruthTrack, cfg=None,
              weights=(1.0, 1.0)) -> LossResult:
    """Combined loss: ``weights[0] * loss_sum + weights[1] * loss_bag_delta``."""
    return _single("traj", traj.offsets, traj.keyframe_box, gt, cfg, weights)


def build_pseudo_track(keyframe_start, keyframe_end, T: int,
                       spec: PseudoTrajectorySpec, class_id: int = 0) -> GroundTruthTrack:
    if spec.kind == "linear":
        return linear_pseudo_track(keyframe_start, keyframe_end, T, class_id)
    return parabola_pseudo_track(keyframe_start, keyframe_end, T, spec.focus_f, class_id)


def loss_traj_sparse(traj: Trajectory, keyframe_start, keyframe_end,
                     spec: PseudoTrajectorySpec, cfg=None,
                     terms: str = "both") -> LossResult:
    """Trajectory loss against a pseudo track built from two keyframe boxes.

    ``terms`` selects the sparse variant: ``"sum"``, ``"bag_delta"``, or
    ``"both"`` for the full combination.
    """
    gt = build_pseudo_track(as_box(keyframe_start), as_box(keyframe_end),
                            traj.length, spec, traj.class_id)
    if terms == "both":
        return loss_traj(traj, gt, cfg)
    if terms == "sum":
        return loss_sum(traj, gt, cfg)
    if terms == "bag_delta":
        return loss_bag_delta(traj, gt, cfg)
    raise ValueError(f"unknown sparse terms selector {terms!r}")


def verify_bag_sum_equivalence(random_seed: int = 0, trials: int = 1000,
                               beta: float = 1.0, lengths=(1, 4, 8)) -> dict:
    """Machine-check that consecutive-difference offsets telescope.

    For random box sequences (with random validity masks), converts boxes
    to consecutive-difference offsets and compares ``loss_sum`` against
    ``loss_bag`` on the same boxes. Returns a report with the max absolute
    deviation over all trials.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(random_seed)
    max_dev = 0.0
    for i in range(trials):
        T = int(lengths[i % len(lengths)])
        boxes = rng.uniform(-20.0, 60.0, size=(T + 1, 4))
        boxes[:, 2:] = np.abs(boxes[:, 2:])
        valid = rng.random(T + 1) > 0.2
        gt = GroundTruthTrack(rng.uniform(-20.0, 60.0, size=(T + 1, 4)), valid, 0)
        traj = Trajectory(boxes[0], 0, np.diff(boxes, axis=0))
        a = loss_sum(traj, gt, beta).value
        b = loss_bag(boxes, gt, beta).value
        max_dev = max(max_dev, abs(a - b))
    return {"trials": trials, "max_abs_deviation": max_dev, "ok": max_dev < 1e-9}
