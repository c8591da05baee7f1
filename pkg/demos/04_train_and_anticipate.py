"""Train the trajectory head and watch it anticipate object locations.

The head sees one keyframe per T frames: the (noisy) detected box, an
area-averaged crop feature, and the target frame index. It predicts the
per-frame box offsets for the next T frames. Training uses the combined
cumulative + per-offset loss with plain SGD.

This demo trains a deliberately short run (a couple of minutes); the
acceptance suite uses longer schedules.

Run:  python demos/04_train_and_anticipate.py
"""

import numpy as np

from trajcast import (DatasetConfig, EvalConfig, TrainConfig, build_dataset,
                      evaluate_trajectory_iou, predict_trajectory,
                      reconstruct_boxes, static_detector_iou, train)
from trajcast.datasets import VELOCITIES
from trajcast.model import FeatureExtractor

sigma = 1.0
train_videos, test_videos = build_dataset(
    DatasetConfig(n_train=100, n_test=30, seed=0, boundary="exit"))

cfg = TrainConfig(T=8, seed=0, loss_kind="traj", jitter_sigma=sigma,
                  learning_rate=2e-4, iterations=6000, feat_grid=12)
params, curve = train(train_videos, cfg)
print(f"loss: {curve[0]:.1f} -> {np.mean(curve[-100:]):.2f}")

ecfg = EvalConfig(T=8, jitter_sigma=sigma, seed=0, feat_grid=12)
trained = evaluate_trajectory_iou(params, test_videos, ecfg)
static = static_detector_iou(test_videos, sigma, 0)
held = evaluate_trajectory_iou(params, test_videos, ecfg, zero_offsets=True)
print(f"mean trajectory IoU: trained {trained['mean_trajectory_iou']:.3f} | "
      f"per-frame noisy detector {static:.3f} | "
      f"held keyframe box {held['mean_trajectory_iou']:.3f}")

# look at one anticipated trajectory
video = test_videos[0]
track = video.tracks[0]
fx = FeatureExtractor(12)
rng = np.random.default_rng(0)
det = track.boxes[0] + rng.normal(0, sigma, 4)
feat = fx.extract(video.frames[0], det)
traj = predict_trajectory(params, det, feat, track.class_id, 0)
pred = reconstruct_boxes(traj)
print(f"\nclass {track.class_id} (true velocity {VELOCITIES[track.class_id]}), "
      f"anticipated from one noisy keyframe box:")
print(" l   predicted x,y        true x,y")
for l in range(9):
    if track.valid[l]:
        print(f"  {l}  ({pred[l, 0]:5.2f}, {pred[l, 1]:5.2f})    "
              f"({track.boxes[l, 0]:5.2f}, {track.boxes[l, 1]:5.2f})")
