"""Trajectory head, feature extraction, oracle keyframe detector, trainer.

The head maps (time index, keyframe box, keyframe feature) to a per-frame
box offset. The three inputs pass through linear embeddings of equal
width, are concatenated, and go through two ReLU hidden layers and a
linear output. Box inputs are normalized by frame size; outputs are
denormalized back to pixels so the losses operate in pixel space.

The keyframe detector is an oracle: ground-truth boxes plus optional
Gaussian jitter, standing in for a real detector so experiments isolate
the anticipation head. Training is plain seeded SGD on the batch-mean of
the selected trajectory loss.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import as_box, iou
from .losses import build_pseudo_track, loss_batch
from .trajectory import PseudoTrajectorySpec, Trajectory
from .datasets import AnnotatedVideo, Track, corrupt_supervision, keyframe_grid


class DivergenceError(RuntimeError):
    """Raised when training produces a non-finite loss."""


LOSS_KINDS = ("bag", "sum", "bag_delta", "traj", "traj_sa_linear", "traj_sa_parabola")

_ARRAY_NAMES = ("W_time", "b_time", "W_box", "b_box", "W_feat", "b_feat",
                "W_h1", "b_h1", "W_h2", "b_h2", "W_out", "b_out")


@dataclass
class TrajectoryHeadParams:
    """Weights of the offset-predicting head plus its fixed geometry."""

    W_time: np.ndarray
    b_time: np.ndarray
    W_box: np.ndarray
    b_box: np.ndarray
    W_feat: np.ndarray
    b_feat: np.ndarray
    W_h1: np.ndarray
    b_h1: np.ndarray
    W_h2: np.ndarray
    b_h2: np.ndarray
    W_out: np.ndarray
    b_out: np.ndarray
    T: int = 8
    frame_size: tuple[int, int] = (64, 64)
    output_scale: float = 8.0
    use_box_input: bool = True
    use_feature_input: bool = True

    @property
    def feat_dim(self) -> int:
        return self.W_feat.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.W_time.shape[1]

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in _ARRAY_NAMES}

    def copy(self) -> "TrajectoryHeadParams":
        return replace(self, **{k: v.copy() for k, v in self.arrays().items()})

    def box_scale(self) -> np.ndarray:
        W, H = self.frame_size
        return np.array([W, H, W, H], dtype=np.float64)


def init_params(feat_dim: int = 64, embed_dim: int = 32, hidden_dim: int = 128,
                T: int = 8, frame_size=(64, 64), seed: int = 0,
                output_scale: float = 8.0,
                use_box_input: bool = True,
                use_feature_input: bool = True) -> TrajectoryHeadParams:
    """Seeded uniform +-1/sqrt(fan_in) initialization (weights and biases)."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 1)))

    def linear(fan_in, fan_out):
        bound = 1.0 / np.sqrt(fan_in)
        return (rng.uniform(-bound, bound, (fan_in, fan_out)),
                rng.uniform(-bound, bound, fan_out))

    W_time, b_time = linear(1, embed_dim)
    W_box, b_box = linear(4, embed_dim)
    W_feat, b_feat = linear(feat_dim, embed_dim)
    W_h1, b_h1 = linear(3 * embed_dim, hidden_dim)
    W_h2, b_h2 = linear(hidden_dim, hidden_dim)
    W_out, b_out = linear(hidden_dim, 4)
    return TrajectoryHeadParams(W_time, b_time, W_box, b_box, W_feat, b_feat,
                                W_h1, b_h1, W_h2, b_h2, W_out, b_out,
                                T=T, frame_size=tuple(frame_size),
                                output_scale=output_scale,
                                use_box_input=use_box_input,
                                use_feature_input=use_feature_input)


def forward_batch(params: TrajectoryHeadParams, ls, boxes, feats,
                  want_cache: bool = False):
    """Predict pixel offsets for a batch of (index, box, feature) rows."""
    ls = np.asarray(ls, dtype=np.float64).reshape(-1, 1)
    boxes = np.asarray(boxes, dtype=np.float64).reshape(len(ls), 4)
    feats = np.asarray(feats, dtype=np.float64).reshape(len(ls), -1)
    if feats.shape[1] != params.feat_dim:
        raise ValueError(f"feature dim {feats.shape[1]}, expected {params.feat_dim}")
    tnorm = ls / params.T
    bnorm = boxes / params.box_scale() if params.use_box_input else np.zeros_like(boxes)
    fin = feats if params.use_feature_input else np.zeros_like(feats)
    e = np.concatenate([tnorm @ params.W_time + params.b_time,
                        bnorm @ params.W_box + params.b_box,
                        fin @ params.W_feat + params.b_feat], axis=1)
    z1 = e @ params.W_h1 + params.b_h1
    h1 = np.maximum(z1, 0.0)
    z2 = h1 @ params.W_h2 + params.b_h2
    h2 = np.maximum(z2, 0.0)
    out = h2 @ params.W_out + params.b_out
    offsets = out * params.output_scale
    if not want_cache:
        return offsets
    cache = {"tnorm": tnorm, "bnorm": bnorm, "fin": fin, "e": e,
             "z1": z1, "h1": h1, "z2": z2, "h2": h2}
    return offsets, cache


def backward_batch(params: TrajectoryHeadParams, cache, d_offsets) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss wrt all parameters, given d(loss)/d(offsets)."""
    d_out = np.asarray(d_offsets, dtype=np.float64) * params.output_scale
    grads = {"W_out": cache["h2"].T @ d_out, "b_out": d_out.sum(axis=0)}
    dz2 = (d_out @ params.W_out.T) * (cache["z2"] > 0)
    grads["W_h2"] = cache["h1"].T @ dz2
    grads["b_h2"] = dz2.sum(axis=0)
    dz1 = (dz2 @ params.W_h2.T) * (cache["z1"] > 0)
    grads["W_h1"] = cache["e"].T @ dz1
    grads["b_h1"] = dz1.sum(axis=0)
    de = dz1 @ params.W_h1.T
    D = params.embed_dim
    de_t, de_b, de_f = de[:, :D], de[:, D:2 * D], de[:, 2 * D:]
    grads["W_time"] = cache["tnorm"].T @ de_t
    grads["b_time"] = de_t.sum(axis=0)
    grads["W_box"] = cache["bnorm"].T @ de_b
    grads["b_box"] = de_b.sum(axis=0)
    grads["W_feat"] = cache["fin"].T @ de_f
    grads["b_feat"] = de_f.sum(axis=0)
    return grads


def forward(params: TrajectoryHeadParams, l: int, box, feat) -> np.ndarray:
    """Offset for a single trajectory index; see :func:`forward_batch`."""
    if not 1 <= l <= params.T:
        raise ValueError(f"index {l} outside 1..{params.T}")
    return forward_batch(params, [l], as_box(box)[None], np.asarray(feat)[None])[0]


def predict_trajectory(params: TrajectoryHeadParams, keyframe_box, feat,
                       class_id: int = 0, start_frame: int = 0) -> Trajectory:
    """Assemble the head's T offsets for one keyframe detection."""
    T = params.T
    offsets = forward_batch(params, np.arange(1, T + 1),
                            np.tile(as_box(keyframe_box), (T, 1)),
                            np.tile(np.asarray(feat, dtype=np.float64), (T, 1)))
    return Trajectory(keyframe_box, class_id, offsets, start_frame)


# ---------------------------------------------------------------------------
# Feature extraction: exact area-averaged resampling of the box crop.
# ---------------------------------------------------------------------------

def _integral_image(frame: np.ndarray) -> np.ndarray:
    S = np.zeros((frame.shape[0] + 1, frame.shape[1] + 1))
    S[1:, 1:] = np.cumsum(np.cumsum(frame / 255.0, axis=0), axis=1)
    return S


def _integral_at(S: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    # bilinear interpolation of the integral image is exact for
    # piecewise-constant images
    H, W = S.shape[0] - 1, S.shape[1] - 1
    iy = np.minimum(ys.astype(np.intp), H - 1)
    ix = np.minimum(xs.astype(np.intp), W - 1)
    fy = (ys - iy)[:, None]
    fx = (xs - ix)[None, :]
    rows0 = S[iy] * (1 - fy) + S[iy + 1] * fy  # (grid+1, W+1)
    return rows0[:, ix] * (1 - fx) + rows0[:, ix + 1] * fx


def extract_feature(frame: np.ndarray, box, grid: int = 8,
                    integral: np.ndarray | None = None) -> np.ndarray:
    """Area-averaged ``grid x grid`` resample of the box crop, in [0, 1].

    The box is clamped to the frame first; a zero-area box yields a zero
    vector. Deterministic and exact (partial pixels weighted by overlap
    area).
    """
    frame = np.asarray(frame)
    H, W = frame.shape
    bx, by, bw, bh = (float(v) for v in np.asarray(box, dtype=np.float64))
    x1 = min(max(bx, 0.0), W)
    y1 = min(max(by, 0.0), H)
    x2 = min(max(bx + bw, 0.0), W)
    y2 = min(max(by + bh, 0.0), H)
    w, h = x2 - x1, y2 - y1
    if w <= 0 or h <= 0:
        return np.zeros(grid * grid)
    S = _integral_image(frame) if integral is None else integral
    ys = y1 + h * np.arange(grid + 1) / grid
    xs = x1 + w * np.arange(grid + 1) / grid
    F = _integral_at(S, ys, xs)
    cells = F[1:, 1:] - F[:-1, 1:] - F[1:, :-1] + F[:-1, :-1]
    return (cells / ((w / grid) * (h / grid))).ravel()


class FeatureExtractor:
    """Per-run feature extractor with integral-image caching and counters.

    The invocation counter and wall-time accumulator feed the
    speed-accuracy sweep, where feature extraction is the expensive stage
    whose amortized cost the keyframe schedule controls.
    """

    def __init__(self, grid: int = 8):
        self.grid = grid
        self.n_calls = 0
        self.wall_time = 0.0
        self._integrals: dict = {}

    @property
    def feat_dim(self) -> int:
        return self.grid * self.grid

    def extract(self, frame: np.ndarray, box, cache_key=None) -> np.ndarray:
        t0 = time.perf_counter()
        integral = None
        if cache_key is not None:
            integral = self._integrals.get(cache_key)
        if integral is None:
            integral = _integral_image(np.asarray(frame))
            if cache_key is not None:
                self._integrals[cache_key] = integral
        out = extract_feature(frame, box, self.grid, integral)
        self.n_calls += 1
        self.wall_time += time.perf_counter() - t0
        return out


# ---------------------------------------------------------------------------
# Oracle keyframe detector
# ---------------------------------------------------------------------------

@dataclass
class OracleDetectorConfig:
    """Gaussian per-coordinate jitter applied to ground-truth keyframe boxes."""

    jitter_sigma: float = 0.0
    score: float = 1.0

    def __post_init__(self):
        if self.jitter_sigma < 0:
            raise ValueError("jitter_sigma must be >= 0")


def oracle_detect(gt_boxes, class_ids, cfg: OracleDetectorConfig,
                  rng: np.random.Generator):
    """Jittered copies of the ground-truth boxes with their classes, score 1."""
    gt_boxes = np.asarray(gt_boxes, dtype=np.float64).reshape(-1, 4)
    noise = rng.normal(0.0, cfg.jitter_sigma, gt_boxes.shape) if len(gt_boxes) else \
        np.zeros((0, 4))
    boxes = gt_boxes + noise
    classes = [int(c) for c in class_ids]
    scores = [cfg.score] * len(boxes)
    return boxes, classes, scores


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    iterations: int = 2000
    batch_size: int = 32
    T: int = 8
    seed: int = 0
    loss_kind: str = "traj"
    smooth_l1_beta: float = 1.0
    jitter_sigma: float = 0.0
    supervision: str = "annotated"
    hidden_dim: int = 128
    embed_dim: int = 32
    feat_grid: int = 8
    fg_threshold: float = 0.5
    traj_weights: tuple[float, float] = (1.0, 1.0)
    output_scale: float = 8.0
    use_box_input: bool = True
    use_feature_input: bool = True

    def __post_init__(self):
        if min(self.learning_rate, self.iterations, self.batch_size, self.T) <= 0:
            raise ValueError("learning_rate, iterations, batch_size, T must be positive")
        if self.loss_kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.loss_kind!r}")


@dataclass
class TrainingWindow:
    video_idx: int
    track_idx: int
    start: int
    gt_boxes: np.ndarray  # (T+1, 4) supervision targets (possibly corrupted)
    valid: np.ndarray  # (T+1,)
    true_keyframe_box: np.ndarray  # (4,) uncorrupted box at the anchor frame
    sa_endpoints: np.ndarray | None  # (2, 4) true keyframe boxes for sparse losses


def _window_anchors(num_frames: int, T: int, keyframe_aligned_only: bool) -> list[int]:
    """Training-window start frames.

    Dense losses anchor at every frame (the keyframe grid is a test-time
    sampling choice; training benefits from all phases). Sparse losses
    need annotations at both window ends, so they anchor on the grid.
    """
    if keyframe_aligned_only:
        return [t for t in range(0, num_frames, T) if t + T <= num_frames - 1]
    return list(range(0, num_frames - T))


def build_training_windows(videos: list[AnnotatedVideo], cfg: TrainConfig,
                           rng: np.random.Generator) -> list[TrainingWindow]:
    """Window the videos into (T+1)-frame training targets.

    Supervision corruption happens here, once per track. Sparse losses use
    only keyframe-aligned anchors so both window endpoints carry true
    annotations.
    """
    sparse = cfg.loss_kind.startswith("traj_sa")
    windows = []
    for vi, video in enumerate(videos):
        W, H = video.frame_size
        for ti, track in enumerate(video.tracks):
            sup = corrupt_supervision(track, cfg.supervision, cfg.T, rng, (W, H))
            for t in _window_anchors(video.num_frames, cfg.T, sparse):
                if not track.valid[t]:
                    continue  # nothing to detect at this keyframe
                sl = slice(t, t + cfg.T + 1)
                sa = None
                if sparse:
                    if not track.valid[t + cfg.T]:
                        continue
                    sa = np.stack([track.boxes[t], track.boxes[t + cfg.T]])
                windows.append(TrainingWindow(vi, ti, t, sup.boxes[sl].copy(),
                                              sup.valid[sl].copy(),
                                              track.boxes[t].copy(), sa))
    return windows


def _sa_spec(loss_kind: str) -> PseudoTrajectorySpec:
    kind = "linear" if loss_kind.endswith("linear") else "parabola"
    return PseudoTrajectorySpec(kind=kind, focus_f=8.0, alternate_sign=False)


def _assemble_batch(windows, picks, videos, cfg: TrainConfig,
                    extractor: FeatureExtractor, rng_jitter: np.random.Generator):
    T = cfg.T
    rows = []
    for wi in picks:
        win = windows[wi]
        video = videos[win.video_idx]
        det_box = win.true_keyframe_box + rng_jitter.normal(0.0, cfg.jitter_sigma, 4)
        if iou(det_box, win.true_keyframe_box) < cfg.fg_threshold:
            continue  # jittered detection lost the object; background sample
        feat = extractor.extract(video.frames[win.start], det_box,
                                 cache_key=(win.video_idx, win.start))
        if win.sa_endpoints is not None:
            pseudo = build_pseudo_track(win.sa_endpoints[0], win.sa_endpoints[1],
                                        T, _sa_spec(cfg.loss_kind))
            gt_boxes, valid = pseudo.boxes, pseudo.valid
        else:
            gt_boxes, valid = win.gt_boxes, win.valid
        rows.append((det_box, feat, gt_boxes, valid))
    if not rows:
        return None
    keyframes = np.stack([r[0] for r in rows])
    feats = np.stack([r[1] for r in rows])
    gt_boxes = np.stack([r[2] for r in rows])
    valid = np.stack([r[3] for r in rows])
    return keyframes, feats, gt_boxes, valid


def _effective_kind(loss_kind: str) -> str:
    return "traj" if loss_kind.startswith("traj_sa") else loss_kind


def train_step(params: TrajectoryHeadParams, batch, cfg: TrainConfig):
    """One SGD step on the batch-mean loss; returns (params', pre-update loss)."""
    keyframes, feats, gt_boxes, valid = batch
    B, T = len(keyframes), cfg.T
    ls = np.tile(np.arange(1, T + 1), B)
    boxes_rep = np.repeat(keyframes, T, axis=0)
    feats_rep = np.repeat(feats, T, axis=0)
    offsets_flat, cache = forward_batch(params, ls, boxes_rep, feats_rep,
                                        want_cache=True)
    values, grad_offsets, _ = loss_batch(_effective_kind(cfg.loss_kind),
                                         offsets_flat.reshape(B, T, 4),
                                         keyframes, gt_boxes, valid,
                                         cfg.smooth_l1_beta, cfg.traj_weights)
    loss = float(values.mean())
    if not np.isfinite(loss):
        raise DivergenceError(f"non-finite loss {loss!r}; lower the learning rate")
    grads = backward_batch(params, cache, grad_offsets.reshape(B * T, 4) / B)
    new = params.copy()
    for name, g in grads.items():
        arr = getattr(new, name)
        arr -= cfg.learning_rate * g
    return new, loss


def train(videos: list[AnnotatedVideo], cfg: TrainConfig,
          extractor: FeatureExtractor | None = None):
    """Train the head on annotated videos; deterministic given the seed.

    Returns ``(params, loss_curve)``. All randomness flows from named
    sub-streams of ``cfg.seed``: 0 data/corruption, 1 init, 2 jitter,
    3 batch sampling.
    """
    if not videos:
        raise ValueError("empty dataset")
    rng_data = np.random.default_rng(np.random.SeedSequence((cfg.seed, 0)))
    rng_jitter = np.random.default_rng(np.random.SeedSequence((cfg.seed, 2)))
    rng_batch = np.random.default_rng(np.random.SeedSequence((cfg.seed, 3)))
    windows = build_training_windows(videos, cfg, rng_data)
    if not windows:
        raise ValueError("no usable training windows")
    extractor = extractor or FeatureExtractor(cfg.feat_grid)
    params = init_params(extractor.feat_dim, cfg.embed_dim, cfg.hidden_dim,
                         cfg.T, videos[0].frame_size, cfg.seed,
                         cfg.output_scale, cfg.use_box_input,
                         cfg.use_feature_input)
    curve = []
    for _ in range(cfg.iterations):
        picks = rng_batch.integers(0, len(windows), cfg.batch_size)
        batch = _assemble_batch(windows, picks, videos, cfg, extractor, rng_jitter)
        if batch is None:
            curve.append(float("nan"))
            continue
        params, loss = train_step(params, batch, cfg)
        curve.append(loss)
    return params, curve


# ---------------------------------------------------------------------------
# Parameter serialization: versioned JSON of named row-major matrices.
# ---------------------------------------------------------------------------

PARAMS_FORMAT_VERSION = 1


def save_params(params: TrajectoryHeadParams, path) -> None:
    doc = {
        "format_version": PARAMS_FORMAT_VERSION,
        "meta": {
            "T": params.T,
            "frame_size": list(params.frame_size),
            "output_scale": params.output_scale,
            "use_box_input": params.use_box_input,
            "use_feature_input": params.use_feature_input,
        },
        "arrays": {
            name: {"shape": list(arr.shape), "data": arr.ravel().tolist()}
            for name, arr in params.arrays().items()
        },
    }
    with open(path, "w") as f:
        json.dump(doc, f, sort_keys=True)
        f.write("\n")


def load_params(path) -> TrajectoryHeadParams:
    with open(path) as f:
        doc = json.load(f)
    if doc.get("format_version") != PARAMS_FORMAT_VERSION:
        raise ValueError(f"unsupported params format {doc.get('format_version')!r}")
    arrays = {name: np.asarray(rec["data"], dtype=np.float64).reshape(rec["shape"])
              for name, rec in doc["arrays"].items()}
    meta = doc["meta"]
    return TrajectoryHeadParams(**arrays, T=int(meta["T"]),
                                frame_size=tuple(meta["frame_size"]),
                                output_scale=float(meta["output_scale"]),
                                use_box_input=bool(meta["use_box_input"]),
                                use_feature_input=bool(meta["use_feature_input"]))
