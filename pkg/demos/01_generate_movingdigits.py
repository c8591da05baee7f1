"""Synthesize a moving-digits video and look at what came out.

Each of the ten sprite classes carries a fixed linear velocity (at most
2 px per frame per axis), so appearance alone determines motion. The
ground-truth track records the tight bounding box of the glyph in every
frame it is fully visible.

Run:  python demos/01_generate_movingdigits.py
"""

import numpy as np

from trajcast import DatasetConfig, build_dataset, make_sprite_classes
from trajcast.datasets import VELOCITIES

sprites = make_sprite_classes()
print("class -> velocity table")
for s in sprites:
    print(f"  class {s.class_id}: v = {s.velocity}, glyph {s.glyph.shape}")

cfg = DatasetConfig(n_train=20, n_test=10, seed=42, boundary="exit")
train, test = build_dataset(cfg)
print(f"\nbuilt {len(train)} train / {len(test)} test videos "
      f"of {cfg.num_frames} frames at {cfg.frame_size}")

video = train[0]
track = video.tracks[0]
print(f"\n{video.video_id}: class {track.class_id}, "
      f"velocity {VELOCITIES[track.class_id]}")
print("frame  box (x, y, w, h)        valid")
for t in range(0, 32, 4):
    x, y, w, h = track.boxes[t]
    print(f"  {t:3d}  ({x:5.1f}, {y:5.1f}, {w:4.1f}, {h:4.1f})   {track.valid[t]}")

# crude ASCII rendering of one frame
frame = video.frames[0]
small = frame.reshape(32, 2, 32, 2).mean(axis=(1, 3))
chars = np.array(list(" .:*#"))
print("\nframe 0 (downsampled):")
for row in chars[np.digitize(small, [1, 64, 128, 200])]:
    print("".join(row))
