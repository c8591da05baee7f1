"""The four trajectory losses on a worked example.

A trajectory is a keyframe box plus T per-frame offsets. The bag loss
scores reconstructed boxes independently; the cumulative loss scores
running offset sums against displacements from the keyframe (this is
what makes order matter); the delta loss scores each offset against the
target's frame-to-frame offsets; the combined loss adds the last two.

When offsets are exactly the consecutive differences of a box sequence,
the cumulative sums telescope and the cumulative loss equals the bag
loss on those boxes -- checked here over a thousand random instances.

Run:  python demos/02_losses_walkthrough.py
"""

import numpy as np

from trajcast import (GroundTruthTrack, Trajectory, loss_bag, loss_bag_delta,
                      loss_sum, loss_traj, reconstruct_boxes,
                      verify_bag_sum_equivalence)

# an object moving right at 2 px/frame for T = 4 frames
gt_boxes = np.array([[10.0 + 2 * l, 20.0, 16, 16] for l in range(5)])
gt = GroundTruthTrack(gt_boxes, np.ones(5, bool), class_id=0)

# a prediction that underestimates the speed
pred = Trajectory(gt_boxes[0], 0, offsets=[[1.5, 0, 0, 0]] * 4)
print("predicted boxes:")
print(reconstruct_boxes(pred))

for name, fn in (("bag", lambda: loss_bag(reconstruct_boxes(pred), gt)),
                 ("sum", lambda: loss_sum(pred, gt)),
                 ("bag_delta", lambda: loss_bag_delta(pred, gt)),
                 ("traj", lambda: loss_traj(pred, gt))):
    result = fn()
    print(f"\nloss_{name}: value = {result.value:.4f}")
    print(f"  d/d(offsets) =\n{result.grad_offsets.round(3)}")

# validity masking: drop frame 2 and the terms touching it vanish
masked = GroundTruthTrack(gt_boxes, np.array([1, 1, 0, 1, 1], bool), 0)
print(f"\nwith frame 2 invalid: sum {loss_sum(pred, masked).value:.4f}, "
      f"delta {loss_bag_delta(pred, masked).value:.4f}")

report = verify_bag_sum_equivalence(random_seed=0, trials=1000)
print(f"\ntelescoping equivalence over {report['trials']} random instances: "
      f"max |L_sum - L_bag| = {report['max_abs_deviation']:.2e}")
