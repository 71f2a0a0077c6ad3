"""End to end on procedural textures: teacher, distilled student, trade-off tables.

With the default config this takes roughly ten minutes on one CPU core.  Pass
--quick for a short smoke run whose numbers are meaningless but which touches
every stage.
"""

import argparse
import time
from pathlib import Path

import torch

from addsr.harness.config import load_config
from addsr.harness.experiment import build_datasets, distill, evaluate_student, evaluate_teacher, format_table, train_teacher

ap = argparse.ArgumentParser()
ap.add_argument("--config", default=str(Path(__file__).resolve().parents[1] / "configs" / "toy.yaml"))
ap.add_argument("--quick", action="store_true")
args = ap.parse_args()

torch.set_num_threads(1)
cfg = load_config(args.config)
if args.quick:
    cfg = cfg.override({"data.n_train": 200, "data.n_test": 8, "teacher.steps": 100, "distill.steps": 50})
train, test = build_datasets(cfg)
print(f"{len(train)} training pairs, {len(test)} test pairs, patch {cfg.data.patch_size}")

start = time.perf_counter()
teacher = train_teacher(cfg, train)
print(f"teacher trained in {time.perf_counter() - start:.0f}s")
ref = evaluate_teacher(teacher, test, cfg)
print(f"teacher, 50 steps: psnr {ref['psnr']:.2f}  ssim {ref['ssim']:.3f}  hf {ref['hf_energy']:.4f}")

start = time.perf_counter()
state = distill(cfg, teacher, train)
print(f"student distilled in {time.perf_counter() - start:.0f}s")

# fidelity drops as the student takes more steps; the blend trades it back
rows = [{"param": "steps", "value": r["steps"], **r} for r in evaluate_student(state.student, test, cfg)]
for r in (0.0, 0.5, 1.0):
    row = evaluate_student(state.student, test, cfg, steps=[4], blend_r=r)[0]
    rows.append({"param": "blend_r", "value": r, **row})
print(format_table(rows))
