"""How the adversarial-to-distillation balance moves across inference steps.

The distillation weight d(s, t) grows with the student step index p(s), so the
ratio lambda / d shrinks as the student gets further along its four steps.  The
constant baseline keeps the same balance for every step.
"""

import argparse

import numpy as np

from addsr.harness.plotting import plot_weighting, ratio_grid
from addsr.objective import WeightingParams, step_factor
from addsr.schedule import StudentTimestepSet, build_schedule

ap = argparse.ArgumentParser()
ap.add_argument("--out", default="weighting_demo", help="output directory")
args = ap.parse_args()

sched = build_schedule()
sts = StudentTimestepSet()

# per-step factors before the sqrt(alpha_bar_t) term
for name, wp in [("exponential", WeightingParams()), ("linear", WeightingParams(form="linear"))]:
    print(f"{name:>12}:", [round(step_factor(p, wp), 4) for p in range(1, 5)])

# the ratio over teacher timesteps, one row per student step
ts, grid = ratio_grid(WeightingParams(), sched, sts, ts=[1, 250, 500, 750, 1000])
print("\nt       " + "  ".join(f"{t:>7d}" for t in ts))
for p, row in enumerate(grid, start=1):
    print(f"step {p}  " + "  ".join(f"{v:7.4f}" for v in row))

_, flat = ratio_grid(WeightingParams(form="constant"), sched, sts, ts=[500])
print("\nconstant baseline at t=500:", np.round(flat[:, 0], 4))

plot_weighting(WeightingParams(), sched, sts, args.out)
print(f"csv and figure written to {args.out}/")
