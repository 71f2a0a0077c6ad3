"""Watch the condition chain evolve during four-step sampling.

Step 1 is conditioned on the bicubic-upsampled LR image.  Every later step is
conditioned on the previous step's x0 estimate, mixed with the LR image by
blend_r.  A briefly trained teacher is enough to see the mechanics; the numbers
are not meant to be good.
"""

import argparse

import torch

from addsr.harness.data import procedural_images, training_pairs
from addsr.networks import DenoiserArch, resize_condition
from addsr.sampler import psr_sample
from addsr.schedule import StudentTimestepSet, build_schedule
from addsr.trainer import TeacherConfig, pretrain_teacher

ap = argparse.ArgumentParser()
ap.add_argument("--steps", type=int, default=300, help="teacher training steps")
args = ap.parse_args()

torch.manual_seed(0)
sched, sts = build_schedule(), StudentTimestepSet()
data = training_pairs(procedural_images(256, 16, seed=0), seed=1)
arch = DenoiserArch(channels=(16, 16, 16), cond_channels=(8, 8, 8), temb_dim=16, groups=4)
net = pretrain_teacher(data, TeacherConfig(steps=args.steps, lr=1e-3, loss="v"), sched, arch)

x_lr, hr = data.lr[:8], data.hr[:8]
for r in (0.0, 0.5, 1.0):
    out, chain = psr_sample(net, x_lr, 4, r, sts, sched, torch.Generator().manual_seed(0))
    print(f"blend_r={r}")
    for p, cond in enumerate(chain.elements, start=1):
        # the first element is the raw LR batch, upsampled inside the sampler
        err = float((resize_condition(cond, hr.shape[-2:]) - hr).pow(2).mean())
        print(f"  step {p} (s={sts.anchor_of(p)}): condition mse to HR {err:.4f}")
    print(f"  output mse to HR {float((out - hr).pow(2).mean()):.4f}")
