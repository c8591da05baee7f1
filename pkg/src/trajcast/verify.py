"""Self-contained property checks: the numerical trust base of the package.

Each check pits an implementation against an independent route: the
telescoping loss equivalence, central finite differences for every
analytic gradient, exact algebra for the parabola construction, and IoU
identities. The CLI ``verify`` command runs them all and fails loudly on
the first broken property.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import apply_offset, iou, offset_between
from .losses import loss_batch, verify_bag_sum_equivalence
from .model import backward_batch, forward_batch, init_params
from .trajectory import (PseudoTrajectorySpec, linear_pseudo_track,
                         parabola_pseudo_track, solve_parabola_vertex,
                         stitch_segments)

FD_STEP = 1e-5
GRAD_RTOL = 1e-4
KINK_MARGIN = 1e-3
# below this magnitude central differences are dominated by cancellation
# noise (|loss| * eps / step), so such entries are skipped
GRAD_FLOOR = 1e-6


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _rel_err(a: float, b: float) -> float:
    if max(abs(a), abs(b)) < GRAD_FLOOR:
        return 0.0
    return abs(a - b) / max(abs(a), abs(b))


def check_bag_sum_equivalence(trials: int = 1000, seed: int = 0) -> CheckResult:
    report = verify_bag_sum_equivalence(seed, trials)
    return CheckResult("bag_sum_equivalence", report["ok"],
                       f"max deviation {report['max_abs_deviation']:.3e} over "
                       f"{report['trials']} trials (tol 1e-9)")


def _random_loss_instance(rng, T, beta):
    """Random window whose residuals stay clear of the smooth-L1 transition."""
    for _ in range(200):
        keyframe = rng.uniform(0, 40, 4)
        offsets = rng.uniform(-3, 3, (T, 4))
        gt_boxes = rng.uniform(0, 40, (T + 1, 4))
        valid = rng.random(T + 1) > 0.2
        cum0 = np.vstack([np.zeros(4), np.cumsum(offsets, axis=0)])
        r_sum = (gt_boxes - keyframe) - cum0
        r_delta = np.diff(gt_boxes, axis=0) - offsets
        resid = np.concatenate([r_sum.ravel(), r_delta.ravel()])
        if np.all(np.abs(np.abs(resid) - beta) > KINK_MARGIN):
            return offsets, keyframe, gt_boxes, valid
    raise RuntimeError("could not sample an instance away from loss kinks")


def check_loss_gradients(instances: int = 100, seed: int = 1,
                         inject_bug: bool = False) -> CheckResult:
    """Analytic offset gradients of all four losses vs central differences."""
    rng = np.random.default_rng(seed)
    beta = 1.0
    worst = 0.0
    for i in range(instances):
        T = int(rng.integers(1, 9))
        offsets, keyframe, gt_boxes, valid = _random_loss_instance(rng, T, beta)
        for kind in ("bag", "sum", "bag_delta", "traj"):
            _, grad, _ = loss_batch(kind, offsets[None], keyframe[None],
                                    gt_boxes[None], valid[None], beta)
            grad = grad[0].copy()
            if inject_bug and kind == "bag_delta":
                grad = -grad
            k = int(rng.integers(0, T))
            c = int(rng.integers(0, 4))
            for k, c in [(k, c), (0, 0), (T - 1, 3)]:
                e = np.zeros((T, 4))
                e[k, c] = FD_STEP
                hi = loss_batch(kind, (offsets + e)[None], keyframe[None],
                                gt_boxes[None], valid[None], beta)[0][0]
                lo = loss_batch(kind, (offsets - e)[None], keyframe[None],
                                gt_boxes[None], valid[None], beta)[0][0]
                fd = (hi - lo) / (2 * FD_STEP)
                worst = max(worst, _rel_err(grad[k, c], fd))
    return CheckResult("loss_gradients", worst < GRAD_RTOL,
                       f"worst relative error {worst:.3e} over {instances} "
                       f"instances (tol {GRAD_RTOL})")


def _head_loss(params, ls, boxes, feats, gt_boxes, valid, T, beta):
    offsets = forward_batch(params, ls, boxes, feats)
    values, grad_off, _ = loss_batch("traj", offsets.reshape(1, T, 4),
                                     boxes[:1], gt_boxes[None], valid[None], beta)
    return float(values[0]), grad_off.reshape(T, 4)


def check_head_gradients(instances: int = 100, seed: int = 2,
                         entries_per_matrix: int = 4) -> CheckResult:
    """End-to-end backprop through the head vs finite differences.

    Uses a small head so the sweep over all parameter matrices stays
    fast; instances near a ReLU or smooth-L1 transition are resampled.
    """
    rng = np.random.default_rng(seed)
    T, beta = 4, 1.0
    worst = 0.0
    checked = 0
    for i in range(instances):
        params = init_params(feat_dim=9, embed_dim=6, hidden_dim=10, T=T,
                             frame_size=(64, 64), seed=int(rng.integers(1 << 30)))
        for _ in range(100):
            box = rng.uniform(5, 40, 4)
            feat = rng.uniform(0, 1, 9)
            gt_boxes = rng.uniform(0, 40, (T + 1, 4))
            valid = np.ones(T + 1, bool)
            ls = np.arange(1, T + 1)
            boxes = np.tile(box, (T, 1))
            feats = np.tile(feat, (T, 1))
            offsets, cache = forward_batch(params, ls, boxes, feats, want_cache=True)
            cum0 = np.vstack([np.zeros(4), np.cumsum(offsets, axis=0)])
            resid = np.concatenate([((gt_boxes - box) - cum0).ravel(),
                                    (np.diff(gt_boxes, axis=0) - offsets).ravel()])
            if (np.all(np.abs(np.abs(resid) - beta) > KINK_MARGIN)
                    and np.all(np.abs(cache["z1"]) > KINK_MARGIN)
                    and np.all(np.abs(cache["z2"]) > KINK_MARGIN)):
                break
        else:
            continue
        _, grad_off = _head_loss(params, ls, boxes, feats, gt_boxes, valid, T, beta)
        grads = backward_batch(params, cache, grad_off)
        for name, arr in params.arrays().items():
            flat = arr.ravel()
            for j in rng.choice(flat.size, size=min(entries_per_matrix, flat.size),
                                replace=False):
                orig = flat[j]
                flat[j] = orig + FD_STEP
                hi, _ = _head_loss(params, ls, boxes, feats, gt_boxes, valid, T, beta)
                flat[j] = orig - FD_STEP
                lo, _ = _head_loss(params, ls, boxes, feats, gt_boxes, valid, T, beta)
                flat[j] = orig
                fd = (hi - lo) / (2 * FD_STEP)
                worst = max(worst, _rel_err(grads[name].ravel()[j], fd))
                checked += 1
    return CheckResult("head_gradients", worst < GRAD_RTOL and checked > 0,
                       f"worst relative error {worst:.3e} over {checked} "
                       f"sampled parameter entries (tol {GRAD_RTOL})")


def check_parabola(instances: int = 100, seed: int = 3) -> CheckResult:
    """Vertex solve reproduces keyframe centers; stitched arcs agree at joints."""
    rng = np.random.default_rng(seed)
    f = 8.0
    worst = 0.0
    # worked case: centers (0,0) -> (16,8) give vertex at the origin
    v1, v2 = solve_parabola_vertex((0.0, 0.0), (16.0, 8.0), f)
    track = parabola_pseudo_track([-4, -4, 8, 8], [12, 4, 8, 8], T=4, focus_f=f)
    mid_center = track.boxes[2, :2] + 0.5 * track.boxes[2, 2:]
    exact = (v1 == 0.0 and v2 == 0.0 and mid_center[0] == 8.0
             and mid_center[1] == 2.0)
    for _ in range(instances):
        start = rng.uniform(0, 40, 4)
        end = rng.uniform(0, 40, 4)
        if abs((start[0] + start[2] / 2) - (end[0] + end[2] / 2)) < 1e-6:
            continue
        T = int(rng.integers(2, 10))
        track = parabola_pseudo_track(start, end, T, f)
        worst = max(worst, np.max(np.abs(track.boxes[0] - start)),
                    np.max(np.abs(track.boxes[-1] - end)))
        # every sampled center must sit on the solved parabola
        v1, v2 = solve_parabola_vertex(start[:2] + start[2:] / 2,
                                       end[:2] + end[2:] / 2, f)
        centers = track.boxes[:, :2] + 0.5 * track.boxes[:, 2:]
        on_curve = np.abs(centers[:, 1] - ((centers[:, 0] - v1) ** 2 / (4 * f) + v2))
        worst = max(worst, float(on_curve.max()))
        # stitched segments with alternating focus share keyframe boxes
        mid = rng.uniform(0, 40, 4)
        if abs((start[0] + start[2] / 2) - (mid[0] + mid[2] / 2)) < 1e-6 or \
           abs((mid[0] + mid[2] / 2) - (end[0] + end[2] / 2)) < 1e-6:
            continue
        spec = PseudoTrajectorySpec(kind="parabola", focus_f=f, alternate_sign=True)
        stitched = stitch_segments([start, mid, end], [0, T, 2 * T], spec)
        seg0 = parabola_pseudo_track(start, mid, T, f)
        seg1 = parabola_pseudo_track(mid, end, T, -f)
        worst = max(worst, np.max(np.abs(seg0.boxes[-1] - seg1.boxes[0])),
                    np.max(np.abs(stitched.boxes[T] - mid)))
    return CheckResult("parabola_construction", exact and worst < 1e-9,
                       f"worked case exact: {exact}; max deviation {worst:.3e} "
                       f"(tol 1e-9)")


def check_iou_properties(trials: int = 1000, seed: int = 4) -> CheckResult:
    rng = np.random.default_rng(seed)
    ok = True
    worst = 0.0
    for _ in range(trials):
        a = rng.uniform(-10, 50, 4)
        b = rng.uniform(-10, 50, 4)
        a[2:] = np.abs(a[2:])
        b[2:] = np.abs(b[2:])
        va, vb = iou(a, b), iou(b, a)
        ok &= va == vb and 0.0 <= va <= 1.0
        if a[2] > 0 and a[3] > 0:
            ok &= iou(a, a) == 1.0
        rt = apply_offset(a, offset_between(a, b))
        worst = max(worst, float(np.max(np.abs(rt - b))))
    ok &= worst < 1e-12
    return CheckResult("iou_and_offset_properties", bool(ok),
                       f"symmetry/range/identity hold; offset round-trip max "
                       f"error {worst:.1e}")


def run_all(trials: int = 1000, seed: int = 0,
            inject_gradient_bug: bool = False) -> list[CheckResult]:
    scale = max(1, trials // 1000)
    return [
        check_bag_sum_equivalence(trials=trials, seed=seed),
        check_loss_gradients(instances=100 * scale, seed=seed + 1,
                             inject_bug=inject_gradient_bug),
        check_head_gradients(instances=min(100 * scale, 200), seed=seed + 2),
        check_parabola(instances=100 * scale, seed=seed + 3),
        check_iou_properties(trials=trials, seed=seed + 4),
    ]
