"""Show how a long sequence is cut into short clips, two ways.

Dilated maps stride across the whole sequence so each clip sees its full
span at a coarse rate; shifted windows are consecutive chunks whose
offset re-randomizes every timestep so the seams never sit still.
"""

import numpy as np

from videoloom import ShiftPlan, clip_weights, make_global_maps, make_local_maps

K, L, d, stride = 20, 6, 4, 3


def ascii_row(indices, K, mark):
    row = ["."] * K
    for i in indices:
        row[min(i, K - 1)] = mark
    return "".join(row)


print(f"sequence of K={K} frames, clips of L={L}\n")

print(f"dilated clips (d={d}); together they tile every frame exactly once:")
for m in make_global_maps(K, L, d):
    pad = f"  (pad right {m.pad[1]})" if m.pad[1] else ""
    print(f"  clip {m.clip_id}: {ascii_row(m.indices, K, '#')}  {list(m.indices)}{pad}")

print(f"\nshifted windows (stride={stride}) at three timesteps; the start"
      "\noffset is a seeded function of the timestep:")
plan = ShiftPlan(seed=42)
for t in (1000, 980, 960):
    maps = make_local_maps(K, L, stride, t, plan)
    print(f"  t={t}: shift={plan.shift(t, stride)}")
    for m in maps:
        print(f"    window {m.clip_id}: {ascii_row(m.indices, K, '=')}")

# Overlapping windows are averaged back with per-frame weights. The
# triangular profile de-emphasizes window borders, which softens seams.
print("\nblending weights for one window:")
print("  uniform:   ", clip_weights(L, "uniform").values)
print("  triangular:", clip_weights(L, "triangular").values)

# Coverage never breaks, whatever the shift: count how many windows touch
# each frame over many timesteps.
counts = np.zeros(K, dtype=int)
for t in range(200):
    for m in make_local_maps(K, L, stride, t, plan):
        counts[m.fold(K)] += 1
print("\nper-frame window visits over 200 timesteps:")
print(" ", counts.tolist())
print("  min visits:", counts.min(), "(never zero)")
