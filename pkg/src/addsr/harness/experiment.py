"""End-to-end toy runs: data, teacher, distillation, evaluation, sweeps."""

from __future__ import annotations

import csv
import logging
from dataclasses import replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
import torch

from .. import metrics
from ..degradation import fixed_pipeline
from ..networks import Denoiser
from ..sampler import baseline_sample, psr_sample
from ..trainer import (
    TrainState,
    init_train_state,
    pretrain_teacher,
    train_distill,
)
from .config import ConfigError, RunConfig
from .data import PairDataset, list_images, load_image, procedural_images, random_crops, to_uint8, training_pairs

log = logging.getLogger(__name__)

SWEEP_PARAMS = ("mu", "nu", "gamma", "kappa", "blend_r", "steps")
TABLE_COLUMNS = ("param", "value", "steps", "psnr", "ssim", "hf_energy")


def build_datasets(cfg: RunConfig) -> tuple[PairDataset, PairDataset]:
    """Training pairs (random degradations) and a held-out test set (fixed named degradation)."""
    d = cfg.data
    if d.path is None:
        train_hr = procedural_images(d.n_train, d.patch_size, seed=d.seed)
        test_hr = procedural_images(d.n_test, d.patch_size, seed=d.seed + 10_000)
    else:
        images = [load_image(p) for p in list_images(d.path)]
        if not images:
            raise ValueError(f"no images found in {d.path}")
        train_hr = random_crops(images, d.n_train, d.patch_size, seed=d.seed)
        test_hr = random_crops(images, d.n_test, d.patch_size, seed=d.seed + 10_000)
    degr = replace(cfg.degradation, scale=1.0 / d.scale)
    train = training_pairs(train_hr, seed=d.seed + 1, cfg=degr)
    test = PairDataset.from_images(test_hr, lambda i: fixed_pipeline(d.test_pipeline, seed=d.seed + i))
    return train, test


def train_teacher(cfg: RunConfig, train: PairDataset, on_step=None) -> Denoiser:
    return pretrain_teacher(train, cfg.teacher, cfg.schedule.build(), cfg.denoiser, on_step=on_step)


def distill(
    cfg: RunConfig,
    teacher: Denoiser,
    train: PairDataset,
    log_path: Optional[str | Path] = None,
    steps: Optional[int] = None,
) -> TrainState:
    state = init_train_state(
        teacher,
        cfg.schedule.build(),
        cfg.sts,
        cfg.weighting,
        cfg.distill,
        replace(cfg.discriminator, scale=cfg.data.scale),
    )
    return train_distill(state, train, cfg.distill.steps if steps is None else steps, log_path=log_path)


def image_metrics(pred: torch.Tensor, hr: torch.Tensor) -> dict:
    """Mean PSNR / SSIM / hf_energy over a batch of [-1, 1] tensors (computed on uint8)."""
    p, h = to_uint8(pred), to_uint8(hr)
    return {
        "psnr": float(np.mean([metrics.psnr(a, b) for a, b in zip(h, p)])),
        "ssim": float(np.mean([metrics.ssim(a, b) for a, b in zip(h, p)])),
        "hf_energy": float(np.mean([metrics.hf_energy(b) for b in p])),
    }


def evaluate_student(
    student: Denoiser,
    test: PairDataset,
    cfg: RunConfig,
    steps: Iterable[int] = (1, 2, 3, 4),
    blend_r: Optional[float] = None,
) -> list[dict]:
    sched = cfg.schedule.build()
    r = cfg.sampling.blend_r if blend_r is None else blend_r
    rows = []
    for n in steps:
        gen = torch.Generator().manual_seed(cfg.sampling.seed)
        out, _ = psr_sample(student, test.lr, n, r, cfg.sts, sched, gen, scale=cfg.data.scale)
        rows.append({"steps": n, **image_metrics(out, test.hr)})
    return rows


def evaluate_teacher(teacher: Denoiser, test: PairDataset, cfg: RunConfig, steps: Optional[int] = None) -> dict:
    n = cfg.sampling.teacher_steps if steps is None else steps
    gen = torch.Generator().manual_seed(cfg.sampling.seed)
    out = baseline_sample(teacher, test.lr, n, cfg.schedule.build(), gen, scale=cfg.data.scale)
    return {"steps": n, **image_metrics(out, test.hr)}


def run_sweep(
    base_cfg: RunConfig,
    param: str,
    values: Sequence,
    teacher: Optional[Denoiser] = None,
    datasets: Optional[tuple[PairDataset, PairDataset]] = None,
    out_dir: Optional[str | Path] = None,
    students: Optional[dict] = None,
) -> list[dict]:
    """Train/infer once per value and tabulate (value, steps, psnr, ssim, hf_energy).

    ``mu``/``nu``/``gamma``/``kappa`` retrain the student per value; ``blend_r`` and
    ``steps`` reuse one student distilled with ``base_cfg``.  Pass ``students`` (a dict)
    to collect the trained students keyed by value.
    """
    if param not in SWEEP_PARAMS:
        raise ConfigError(f"unknown sweep parameter {param!r}; choose from {SWEEP_PARAMS}")
    if not values:
        raise ConfigError("sweep needs at least one value")
    train, test = datasets if datasets is not None else build_datasets(base_cfg)
    if teacher is None:
        teacher = train_teacher(base_cfg, train)

    rows: list[dict] = []
    if param in ("mu", "nu", "gamma", "kappa"):
        for v in values:
            cfg = replace(base_cfg, weighting=base_cfg.weighting.with_(**{param: float(v)}))
            state = distill(cfg, teacher, train)
            if students is not None:
                students[v] = state.student
            for row in evaluate_student(state.student, test, cfg):
                rows.append({"param": param, "value": v, **row})
    else:
        state = distill(base_cfg, teacher, train)
        if students is not None:
            students[None] = state.student
        for v in values:
            if param == "blend_r":
                evals = evaluate_student(state.student, test, base_cfg, blend_r=float(v))
            else:
                evals = evaluate_student(state.student, test, base_cfg, steps=[int(v)])
            rows.extend({"param": param, "value": v, **row} for row in evals)

    if out_dir is not None:
        write_table(rows, out_dir, f"sweep_{param}")
    return rows


def format_table(rows: Sequence[dict]) -> str:
    header = f"{'param':>8} {'value':>8} {'steps':>5} {'psnr':>8} {'ssim':>7} {'hf_energy':>9}"
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(
            f"{r['param']:>8} {str(r['value']):>8} {r['steps']:>5} "
            f"{r['psnr']:8.3f} {r['ssim']:7.4f} {r['hf_energy']:9.5f}"
        )
    return "\n".join(lines)


def write_table(rows: Sequence[dict], out_dir: str | Path, stem: str) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path, txt_path = out_dir / f"{stem}.csv", out_dir / f"{stem}.txt"
    with open(csv_path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=TABLE_COLUMNS)
        w.writeheader()
        w.writerows(rows)
    txt_path.write_text(format_table(rows) + "\n")
    return csv_path, txt_path
