"""MovingDigits-style synthetic annotated video generation.

Ten sprite classes, each tied to a fixed, distinct linear velocity (2 px
per frame per axis at most), rendered into 32-frame 64x64 grayscale
videos with tight per-frame ground-truth boxes. Supports bounce or wrap
boundary handling, supervision-regime corruption for controlled
experiments, optional MNIST IDX ingestion for glyphs, and PGM + JSON
manifest persistence.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .trajectory import PseudoTrajectorySpec, stitch_segments

# class_id -> (vx, vy); pairwise distinct, max-norm 2 px per frame
VELOCITIES = ((2, 0), (-2, 0), (0, 2), (0, -2), (2, 2),
              (2, -2), (-2, 2), (-2, -2), (2, 1), (-2, -1))

SUPERVISION_REGIMES = ("annotated", "smooth", "random", "none")


@dataclass
class SpriteClass:
    class_id: int
    glyph: np.ndarray  # (gh, gw) uint8 in {0, 1}
    velocity: tuple[int, int]


@dataclass
class Track:
    """One object's boxes over a full video, with a validity mask."""

    boxes: np.ndarray  # (F, 4)
    valid: np.ndarray  # (F,) bool
    class_id: int
    track_id: int

    def __post_init__(self):
        self.boxes = np.asarray(self.boxes, dtype=np.float64).reshape(-1, 4)
        self.valid = np.asarray(self.valid, dtype=bool).reshape(-1)


@dataclass
class AnnotatedVideo:
    video_id: str
    frames: np.ndarray  # (F, H, W) uint8
    tracks: list[Track]

    @property
    def num_frames(self) -> int:
        return len(self.frames)

    @property
    def frame_size(self) -> tuple[int, int]:
        return (self.frames.shape[2], self.frames.shape[1])


@dataclass
class DatasetConfig:
    """Synthesis settings.

    Boundary modes: ``bounce`` reflects the velocity at walls (objects
    stay in frame forever), ``wrap`` moves on a torus with mod-frame box
    coordinates, and ``exit`` lets objects drift out of view, clamping
    the box to the visible part and marking frames invalid once nothing
    is visible. Only ``exit`` keeps motion direction a pure function of
    appearance over the whole video, which the learning experiments rely
    on.
    """

    n_train: int = 200
    n_test: int = 80
    seed: int = 0
    boundary: str = "bounce"  # "bounce" | "wrap" | "exit"
    sprite_source: str = "procedural"  # "procedural" | "mnist"
    sprites_per_video: int = 1
    num_frames: int = 32
    frame_size: tuple[int, int] = (64, 64)  # (width, height)
    mnist_images: str | None = None
    mnist_labels: str | None = None

    def __post_init__(self):
        if self.n_train % 10 or self.n_test % 10:
            raise ValueError("n_train and n_test must be divisible by 10 "
                             "(equal videos per class)")
        if self.boundary not in ("bounce", "wrap", "exit"):
            raise ValueError(f"unknown boundary mode {self.boundary!r}")
        if self.sprites_per_video not in (1, 2):
            raise ValueError("sprites_per_video must be 1 or 2")


def procedural_glyph(class_id: int, size: int = 16) -> np.ndarray:
    """One of ten visually distinct binary patterns, all touching every edge."""
    i, j = np.indices((size, size))
    c = (size - 1) / 2
    patterns = [
        (i < 2) | (i >= size - 2) | (j < 2) | (j >= size - 2),        # ring
        (np.abs(i - j) <= 1) | (np.abs(i + j - (size - 1)) <= 1),     # X
        (np.abs(i - c) < 2) | (np.abs(j - c) < 2),                    # plus
        i % 5 < 2,                                                    # h-stripes
        j % 5 < 2,                                                    # v-stripes
        ((i // 4) + (j // 4)) % 2 == 0,                               # checker
        np.ones((size, size), bool),                                  # solid
        np.abs(i - j) <= 2,                                           # diagonal
        np.abs(i + j - (size - 1)) <= 2,                              # anti-diag
        (i < 1) | (i >= size - 1) | (j < 1) | (j >= size - 1)
        | ((np.abs(i - c) < 3) & (np.abs(j - c) < 3)),                # dot-in-ring
    ]
    return patterns[class_id].astype(np.uint8)


def make_sprite_classes(source: str = "procedural",
                        mnist_images: str | None = None,
                        mnist_labels: str | None = None) -> list[SpriteClass]:
    """Ten sprite classes with the fixed velocity table.

    ``procedural`` uses the built-in 16x16 patterns; ``mnist`` takes the
    first exemplar of each digit class from an IDX image/label pair,
    binarized at intensity 128.
    """
    if source == "procedural":
        glyphs = [procedural_glyph(c) for c in range(10)]
    elif source == "mnist":
        by_class = read_mnist_idx(mnist_images, mnist_labels)
        missing = [c for c in range(10) if not by_class.get(c)]
        if missing:
            raise ValueError(f"MNIST source lacks exemplars for classes {missing}")
        glyphs = [by_class[c][0] for c in range(10)]
    else:
        raise ValueError(f"unknown sprite source {source!r}")
    return [SpriteClass(c, glyphs[c], VELOCITIES[c]) for c in range(10)]


def _glyph_extent(glyph: np.ndarray) -> tuple[int, int, int, int]:
    """(col0, row0, w, h) of the nonzero region of a glyph bitmap."""
    rows = np.flatnonzero(glyph.any(axis=1))
    cols = np.flatnonzero(glyph.any(axis=0))
    if len(rows) == 0:
        raise ValueError("glyph is empty")
    return int(cols[0]), int(rows[0]), int(cols[-1] - cols[0] + 1), int(rows[-1] - rows[0] + 1)


def _simulate_positions(start: tuple[int, int], velocity: tuple[int, int],
                        glyph_size: tuple[int, int], frame_size: tuple[int, int],
                        num_frames: int, boundary: str) -> np.ndarray:
    W, H = frame_size
    gw, gh = glyph_size
    x, y = int(start[0]), int(start[1])
    vx, vy = int(velocity[0]), int(velocity[1])
    out = np.empty((num_frames, 2), dtype=np.int64)
    for t in range(num_frames):
        out[t] = (x, y)
        x, y = x + vx, y + vy
        if boundary == "bounce":
            if x < 0:
                x, vx = -x, -vx
            elif x > W - gw:
                x, vx = 2 * (W - gw) - x, -vx
            if y < 0:
                y, vy = -y, -vy
            elif y > H - gh:
                y, vy = 2 * (H - gh) - y, -vy
        elif boundary == "wrap":
            x %= W
            y %= H
        # "exit": positions evolve freely; rendering clips at the frame
    return out


def _render_sprite(frame: np.ndarray, glyph255: np.ndarray, x: int, y: int,
                   boundary: str) -> np.ndarray | None:
    """Draw the glyph; returns the visible sub-bitmap (None if none visible)."""
    H, W = frame.shape
    gh, gw = glyph255.shape
    if boundary == "wrap":
        rows = (y + np.arange(gh)) % H
        cols = (x + np.arange(gw)) % W
        sub = frame[np.ix_(rows, cols)]
        frame[np.ix_(rows, cols)] = np.maximum(sub, glyph255)
        return glyph255
    x1, y1 = max(x, 0), max(y, 0)
    x2, y2 = min(x + gw, W), min(y + gh, H)
    if x2 <= x1 or y2 <= y1:
        return None
    piece = glyph255[y1 - y:y2 - y, x1 - x:x2 - x]
    frame[y1:y2, x1:x2] = np.maximum(frame[y1:y2, x1:x2], piece)
    return piece


def synthesize_video(class_ids, start_positions, cfg: DatasetConfig,
                     sprites: list[SpriteClass], video_id: str = "video") -> AnnotatedVideo:
    """Render one annotated video for the given sprite classes and starts.

    Each sprite translates by its class velocity every frame; the
    ground-truth box is the tight bounding box of its glyph. Under bounce
    the glyph never leaves the frame and every frame is valid.
    """
    class_ids = [int(c) for c in np.atleast_1d(class_ids)]
    starts = np.atleast_2d(np.asarray(start_positions, dtype=np.int64))
    W, H = cfg.frame_size
    frames = np.zeros((cfg.num_frames, H, W), dtype=np.uint8)
    tracks = []
    for tid, (cid, start) in enumerate(zip(class_ids, starts)):
        sp = sprites[cid]
        col0, row0, bw, bh = _glyph_extent(sp.glyph)
        pos = _simulate_positions(tuple(start), sp.velocity, sp.glyph.shape[::-1],
                                  (W, H), cfg.num_frames, cfg.boundary)
        boxes = np.zeros((cfg.num_frames, 4))
        valid = np.zeros(cfg.num_frames, bool)
        glyph255 = sp.glyph * np.uint8(255)
        gh, gw = sp.glyph.shape
        for t, (x, y) in enumerate(pos):
            piece = _render_sprite(frames[t], glyph255, int(x), int(y),
                                   cfg.boundary)
            if cfg.boundary == "exit" and (x < 0 or y < 0 or x + gw > W
                                           or y + gh > H):
                continue  # partially or fully out of view: no annotation
            if piece is None or not piece.any():
                continue
            boxes[t] = (x + col0, y + row0, bw, bh)
            valid[t] = True
        tracks.append(Track(boxes, valid, cid, tid))
    return AnnotatedVideo(video_id, frames, tracks)


def _start_range(extent: int, v: int, boundary: str) -> tuple[int, int]:
    """Inclusive start range along one axis.

    Under ``exit`` the start is drawn from the third of the range the
    sprite moves away from, so it stays fully visible for most of the
    video before drifting out.
    """
    if boundary != "exit" or v == 0:
        return 0, extent
    margin = extent // 3
    return (0, margin) if v > 0 else (extent - margin, extent)


def _draw_starts(rng: np.random.Generator, n_sprites: int,
                 sprites: list[SpriteClass], class_ids,
                 frame_size: tuple[int, int], boundary: str) -> np.ndarray:
    W, H = frame_size
    starts = np.empty((n_sprites, 2), dtype=np.int64)
    for k, cid in enumerate(class_ids):
        gh, gw = sprites[cid].glyph.shape
        vx, vy = sprites[cid].velocity
        x_lo, x_hi = _start_range(W - gw, vx, boundary)
        y_lo, y_hi = _start_range(H - gh, vy, boundary)
        for _ in range(100):
            x = int(rng.integers(x_lo, x_hi + 1))
            y = int(rng.integers(y_lo, y_hi + 1))
            if all(abs(x - starts[p, 0]) >= sprites[class_ids[p]].glyph.shape[1]
                   or abs(y - starts[p, 1]) >= sprites[class_ids[p]].glyph.shape[0]
                   for p in range(k)):
                break
        starts[k] = (x, y)
    return starts


def build_dataset(cfg: DatasetConfig) -> tuple[list[AnnotatedVideo], list[AnnotatedVideo]]:
    """Seeded (train, test) splits with equal per-class video counts."""
    sprites = make_sprite_classes(cfg.sprite_source, cfg.mnist_images, cfg.mnist_labels)
    splits = []
    for split_idx, (name, count) in enumerate((("train", cfg.n_train),
                                               ("test", cfg.n_test))):
        videos = []
        for i in range(count):
            primary = i % 10
            class_ids = [primary]
            if cfg.sprites_per_video == 2:
                class_ids.append((primary + 5) % 10)
            rng = np.random.default_rng(
                np.random.SeedSequence((cfg.seed, split_idx, i)))
            starts = _draw_starts(rng, len(class_ids), sprites, class_ids,
                                  cfg.frame_size, cfg.boundary)
            videos.append(synthesize_video(class_ids, starts, cfg, sprites,
                                           video_id=f"{name}-{i:04d}"))
        splits.append(videos)
    return splits[0], splits[1]


def keyframe_grid(num_frames: int, T: int) -> list[int]:
    """Keyframe indices: every T-th frame plus the final frame.

    The final frame is appended so the last training window, right-aligned
    to the video end, still has an annotated endpoint.
    """
    ks = list(range(0, num_frames, T))
    if ks[-1] != num_frames - 1:
        ks.append(num_frames - 1)
    return ks


def corrupt_supervision(track: Track, regime: str, T: int,
                        rng: np.random.Generator | None = None,
                        frame_size: tuple[int, int] = (64, 64)) -> Track:
    """Replace between-keyframe supervision per the given regime.

    ``annotated`` returns the track unchanged; ``none`` keeps only
    keyframe boxes valid; ``random`` moves between-keyframe boxes to
    uniform random in-frame positions (original sizes); ``smooth``
    replaces them with stitched parabola pseudo tracks (focus 8,
    alternating sign). Keyframes are every T frames plus the final frame,
    and keyframe boxes are always preserved exactly.
    """
    if regime not in SUPERVISION_REGIMES:
        raise ValueError(f"unknown supervision regime {regime!r}")
    boxes = track.boxes.copy()
    valid = track.valid.copy()
    if regime == "annotated":
        return Track(boxes, valid, track.class_id, track.track_id)

    F = len(boxes)
    ks = [k for k in keyframe_grid(F, T) if track.valid[k]]
    between = np.ones(F, bool)
    between[ks] = False

    if regime == "none":
        valid &= ~between
    elif regime == "random":
        if rng is None:
            raise ValueError("regime 'random' needs an rng")
        W, H = frame_size
        for t in np.flatnonzero(between & valid):
            w, h = boxes[t, 2], boxes[t, 3]
            boxes[t, 0] = rng.uniform(0.0, max(W - w, 0.0))
            boxes[t, 1] = rng.uniform(0.0, max(H - h, 0.0))
    else:  # smooth: pseudo boxes exist only between consecutive valid keyframes
        valid = np.zeros(F, bool)
        valid[ks] = True
        if len(ks) >= 2:
            spec = PseudoTrajectorySpec(kind="parabola", focus_f=8.0,
                                        alternate_sign=True)
            stitched = stitch_segments(boxes[ks], ks, spec, track.class_id)
            boxes[ks[0]:ks[-1] + 1] = stitched.boxes
            boxes[ks] = track.boxes[ks]
            valid[ks[0]:ks[-1] + 1] = True
    return Track(boxes, valid, track.class_id, track.track_id)


# ---------------------------------------------------------------------------
# MNIST IDX ingestion
# ---------------------------------------------------------------------------

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


def _read_exact(f, n: int, path) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise ValueError(f"{path}: truncated file, expected {n} more bytes, "
                         f"got {len(data)}")
    return data


def read_mnist_idx(images_path, labels_path,
                   binarize_threshold: int = 128) -> dict[int, list[np.ndarray]]:
    """Parse an IDX image/label file pair into per-class binary glyphs.

    Big-endian magic 0x00000803 for images (count, rows, cols) and
    0x00000801 for labels. Pixels >= ``binarize_threshold`` become 1.
    """
    with open(images_path, "rb") as f:
        magic, count, rows, cols = struct.unpack(">iiii", _read_exact(f, 16, images_path))
        if magic != IDX_IMAGE_MAGIC:
            raise ValueError(f"{images_path}: bad image magic {magic:#010x}, "
                             f"expected {IDX_IMAGE_MAGIC:#010x}")
        raw = _read_exact(f, count * rows * cols, images_path)
        images = np.frombuffer(raw, dtype=np.uint8).reshape(count, rows, cols)
    with open(labels_path, "rb") as f:
        magic, label_count = struct.unpack(">ii", _read_exact(f, 8, labels_path))
        if magic != IDX_LABEL_MAGIC:
            raise ValueError(f"{labels_path}: bad label magic {magic:#010x}, "
                             f"expected {IDX_LABEL_MAGIC:#010x}")
        labels = np.frombuffer(_read_exact(f, label_count, labels_path), dtype=np.uint8)
    if count != label_count:
        raise ValueError(f"image count {count} does not match label count {label_count}")
    by_class: dict[int, list[np.ndarray]] = {c: [] for c in range(10)}
    for img, lab in zip(images, labels):
        by_class[int(lab)].append((img >= binarize_threshold).astype(np.uint8))
    return by_class


# ---------------------------------------------------------------------------
# On-disk formats: PGM frames + JSON manifest
# ---------------------------------------------------------------------------

def write_pgm(path, img: np.ndarray) -> None:
    img = np.asarray(img, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        f.write(img.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    if not data.startswith(b"P5"):
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        fields.append(int(data[start:pos]))
    w, h, maxval = fields
    pos += 1
    img = np.frombuffer(data[pos:pos + w * h], dtype=np.uint8)
    if img.size != w * h:
        raise ValueError(f"{path}: truncated PGM payload")
    return img.reshape(h, w)


MANIFEST_NAME = "manifest.json"
MANIFEST_SCHEMA_VERSION = 1


def _video_record(video: AnnotatedVideo, split: str, frame_paths) -> dict:
    return {
        "id": video.video_id,
        "split": split,
        "frames": frame_paths,
        "tracks": [{
            "track_id": tr.track_id,
            "class_id": tr.class_id,
            "boxes": tr.boxes.tolist(),
            "valid": tr.valid.tolist(),
        } for tr in video.tracks],
    }


def save_dataset(train, test, cfg: DatasetConfig, outdir) -> Path:
    """Write PGM frames and the JSON annotation manifest; returns manifest path."""
    outdir = Path(outdir)
    records = []
    for split, videos in (("train", train), ("test", test)):
        for video in videos:
            vdir = outdir / split / video.video_id
            vdir.mkdir(parents=True, exist_ok=True)
            paths = []
            for t, frame in enumerate(video.frames):
                rel = f"{split}/{video.video_id}/f{t:03d}.pgm"
                write_pgm(outdir / rel, frame)
                paths.append(rel)
            records.append(_video_record(video, split, paths))
    manifest = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "frame_size": list(cfg.frame_size),
        "num_frames": cfg.num_frames,
        "boundary": cfg.boundary,
        "seed": cfg.seed,
        "n_train": cfg.n_train,
        "n_test": cfg.n_test,
        "videos": records,
    }
    path = outdir / MANIFEST_NAME
    with open(path, "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
        f.write("\n")
    return path


def load_dataset(datadir) -> tuple[list[AnnotatedVideo], list[AnnotatedVideo], dict]:
    """Read a dataset directory back into memory; returns (train, test, manifest)."""
    datadir = Path(datadir)
    with open(datadir / MANIFEST_NAME) as f:
        manifest = json.load(f)
    if manifest.get("schema_version") != MANIFEST_SCHEMA_VERSION:
        raise ValueError(f"unsupported manifest schema {manifest.get('schema_version')!r}")
    splits: dict[str, list[AnnotatedVideo]] = {"train": [], "test": []}
    for rec in manifest["videos"]:
        frames = np.stack([read_pgm(datadir / rel) for rel in rec["frames"]])
        tracks = [Track(np.asarray(tr["boxes"]), np.asarray(tr["valid"]),
                        int(tr["class_id"]), int(tr["track_id"]))
                  for tr in rec["tracks"]]
        splits[rec["split"]].append(AnnotatedVideo(rec["id"], frames, tracks))
    return splits["train"], splits["test"], manifest
