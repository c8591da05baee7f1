"""Densifying sparse keyframe annotations with pseudo-trajectories.

With labels only every T frames, the space in between is filled either
by straight-line interpolation or by a parabola through the two keyframe
centers (focus (0, f), f = 8; widths and heights interpolate linearly).
Consecutive parabola segments flip the focus sign so the stitched track
stays smooth at the shared keyframes.

Run:  python demos/03_pseudo_trajectories.py
"""

import numpy as np

from trajcast import (PseudoTrajectorySpec, linear_pseudo_track,
                      parabola_pseudo_track, solve_parabola_vertex,
                      stitch_segments)

start = np.array([0.0, 0.0, 8, 8])    # center (4, 4)
end = np.array([16.0, 8.0, 8, 8])     # center (20, 12)

lin = linear_pseudo_track(start, end, T=8)
par = parabola_pseudo_track(start, end, T=8, focus_f=8.0)
v1, v2 = solve_parabola_vertex((4, 4), (20, 12), 8.0)
print(f"parabola vertex: v1 = {v1:.3f}, v2 = {v2:.3f}")
print("\n l   linear center      parabola center")
for l in range(9):
    lc = lin.boxes[l, :2] + lin.boxes[l, 2:] / 2
    pc = par.boxes[l, :2] + par.boxes[l, 2:] / 2
    print(f"  {l}  ({lc[0]:5.2f}, {lc[1]:5.2f})    ({pc[0]:5.2f}, {pc[1]:5.2f})")

# three keyframes: the second arc bends the other way (focus -8)
spec = PseudoTrajectorySpec(kind="parabola", focus_f=8.0, alternate_sign=True)
mid = np.array([32.0, 16.0, 8, 8])
stitched = stitch_segments([start, end, mid], [0, 8, 16], spec)
centers = stitched.boxes[:, :2] + stitched.boxes[:, 2:] / 2
print("\nstitched track (two arcs, alternating focus):")
print("  y deviations from the straight line through the keyframes:")
straight = np.interp(centers[:, 0], [4, 36], [4, 20])
print("  " + " ".join(f"{d:+.2f}" for d in (centers[:, 1] - straight)))

# vertical motion has no parabola (x is constant): falls back to linear
fb = parabola_pseudo_track([5, 0, 8, 8], [5, 20, 8, 8], T=4, focus_f=8.0)
print(f"\nvertical motion falls back to linear: {fb.parabola_fallback}")
