"""Detection metrics and the keyframe-interval cost trade-off.

Average precision uses the COCO convention (greedy score-ordered
matching, 101-point interpolation, thresholds 0.50:0.05:0.95). The sweep
shows the amortized cost of feature extraction falling as 1/T while the
detector runs on fewer keyframes and the head fills in the rest.

Run:  python demos/05_detection_metrics_and_sweep.py
"""

import numpy as np

from trajcast import (DatasetConfig, Detection, EvalConfig, TrainConfig,
                      average_precision, build_dataset, map_range,
                      speed_accuracy_sweep)

# hand-checkable AP cases: one ground-truth box in one frame
gts = {0: [(np.array([0.0, 0, 4, 4]), 0)]}
tp_first = [Detection(0, [0, 0, 4, 4], 0, 0.9), Detection(0, [20, 20, 4, 4], 0, 0.1)]
fp_first = [Detection(0, [20, 20, 4, 4], 0, 0.9), Detection(0, [0, 0, 4, 4], 0, 0.1)]
print(f"AP, true positive ranked first:  {average_precision(tp_first, gts, 0, 0.5)}")
print(f"AP, false positive ranked first: {average_precision(fp_first, gts, 0, 0.5)}")

# a detection 1 px off a 10x10 box has IoU 9/19 at worst... show the ramp
gts2 = {0: [(np.array([0.0, 0, 10, 10]), 0)]}
report = map_range([Detection(0, [1, 0, 10, 10], 0, 1.0)], gts2)
print("\nper-threshold mAP for a 1 px x-shift on a 10x10 box:")
for thr, v in report.map_per_threshold.items():
    print(f"  IoU >= {thr:.2f}: {v:.1f}")
print(f"grand mAP: {report.grand_map:.2f}")

# the speed-accuracy trade-off: fewer keyframes, longer trajectories
train_videos, test_videos = build_dataset(
    DatasetConfig(n_train=50, n_test=20, seed=0, boundary="bounce"))
cfg = TrainConfig(seed=0, loss_kind="traj", learning_rate=2e-4, iterations=1500,
                  jitter_sigma=0.0)
rows = speed_accuracy_sweep(train_videos, test_videos, [2, 4, 8, 16], cfg,
                            EvalConfig(jitter_sigma=0.0, seed=0))
print("\n  T   extractions/frame   all-frames mAP   feature wall time")
for r in rows:
    print(f"  {r.T:2d}   {r.extractions_per_frame:.4f}            "
          f"{r.all_frames_map:.3f}            {r.extraction_wall_time:.3f}s")
