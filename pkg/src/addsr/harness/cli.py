"""Command line entry point: ``addsr <subcommand> ...``.

Exit codes: 0 success, 2 configuration error, 3 non-finite loss.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import torch

from .. import metrics
from ..degradation import (
    FIXED_PIPELINES,
    apply_pipeline,
    fixed_pipeline,
    random_training_pipeline,
)
from ..objective import PRESETS
from ..sampler import psr_sample
from ..trainer import NonFiniteLossError
from . import checkpoint as ckpt
from .config import ConfigError, RunConfig, load_config, save_config
from .data import list_images, load_image, save_png, to_tensor, to_uint8
from .experiment import build_datasets, distill, format_table, run_sweep, train_teacher, write_table
from .manifest import write_manifest
from .plotting import plot_weighting

log = logging.getLogger("addsr")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _config(args) -> RunConfig:
    cfg = load_config(args.config)
    overrides = {
        "seed": getattr(args, "seed", None),
        "data.path": getattr(args, "data", None),
        "data.patch_size": getattr(args, "patch_size", None),
        "teacher.steps": getattr(args, "teacher_steps", None),
        "distill.steps": getattr(args, "distill_steps", None),
        "distill.teacher_cond": getattr(args, "teacher_cond", None),
        "distill.batch_size": getattr(args, "batch_size", None),
        "distill.lr": getattr(args, "lr", None),
        "weighting.form": getattr(args, "form", None),
        "weighting.mu": getattr(args, "mu", None),
        "weighting.nu": getattr(args, "nu", None),
        "weighting.gamma": getattr(args, "gamma", None),
        "weighting.kappa": getattr(args, "kappa", None),
        "weighting.lambda": getattr(args, "lam", None),
        "degradation.order": getattr(args, "order", None),
    }
    preset = getattr(args, "preset", None)
    if preset is not None:
        base = PRESETS[preset].to_dict()
        overrides = {**{f"weighting.{k}": v for k, v in base.items()}, **{k: v for k, v in overrides.items() if v is not None}}
    if overrides.get("seed") is not None:
        s = overrides["seed"]
        overrides.update({"distill.seed": s, "teacher.seed": s, "sampling.seed": s})
    return cfg.override(overrides)


def _add_common(p, weighting=False):
    p.add_argument("--config", help="YAML run config")
    p.add_argument("--seed", type=int)
    if weighting:
        p.add_argument("--preset", choices=sorted(PRESETS))
        p.add_argument("--form", choices=["exponential", "linear", "constant"])
        p.add_argument("--mu", type=float)
        p.add_argument("--nu", type=float)
        p.add_argument("--gamma", type=float)
        p.add_argument("--kappa", type=float)
        p.add_argument("--lambda", dest="lam", type=float)


def cmd_pretrain_teacher(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train, _ = build_datasets(cfg)
    rows = []
    teacher = train_teacher(cfg, train, on_step=lambda s, l: rows.append((s, l)))
    with open(out / "teacher_loss.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "loss"])
        w.writerows((s, repr(l)) for s, l in rows)
    ckpt.save_denoiser(out / "teacher.npz", teacher, cfg.schedule.build())
    save_config(cfg, out / "config.yaml")
    write_manifest(out, cfg, "pretrain-teacher")
    print(f"teacher saved to {out / 'teacher.npz'}")
    return EXIT_OK


def cmd_distill(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sched = cfg.schedule.build()
    teacher, _ = ckpt.load_denoiser(args.teacher, expected_schedule=sched)
    cfg = replace(cfg, denoiser=teacher.arch)
    train, _ = build_datasets(cfg)
    state = distill(cfg, teacher, train, log_path=out / "train_log.csv")
    ckpt.save_train_state(out / "student.npz", state)
    save_config(cfg, out / "config.yaml")
    write_manifest(out, cfg, "distill", {"teacher": str(args.teacher)})
    print(f"student saved to {out / 'student.npz'}")
    return EXIT_OK


def cmd_infer(args) -> int:
    cfg = _config(args)
    net, meta = ckpt.load_denoiser(args.ckpt)
    sched = ckpt.NoiseSchedule.from_dict(meta["schedule"])
    anchors = meta.get("anchors", list(cfg.anchors))
    sts = ckpt.StudentTimestepSet(tuple(anchors))
    out = Path(args.out)
    paths = list_images(args.inp)
    for i, p in enumerate(paths):
        x_lr = to_tensor([load_image(p)])
        gen = torch.Generator().manual_seed(args.seed + i)
        x_hr, chain = psr_sample(net, x_lr, args.steps, args.blend_r, sts, sched, gen, scale=args.scale)
        save_png(out / f"{p.stem}.png", to_uint8(x_hr)[0])
        if args.dump_chain:
            for k, c in enumerate(chain.elements, start=1):
                save_png(out / "chain" / f"{p.stem}_cond{k}.png", to_uint8(c)[0])
    print(f"restored {len(paths)} image(s) into {out}")
    return EXIT_OK


def cmd_degrade(args) -> int:
    out = Path(args.out)
    paths = list_images(args.inp)
    for i, p in enumerate(paths):
        if args.pipeline:
            pipe = fixed_pipeline(args.pipeline, seed=args.seed + i)
        else:
            cfg = _config(args)
            degr = replace(cfg.degradation, scale=1.0 / args.scale)
            pipe = random_training_pipeline(args.seed + i, degr)
        save_png(out / f"{p.stem}.png", apply_pipeline(load_image(p), pipe))
    print(f"degraded {len(paths)} image(s) into {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    preds = {p.stem: p for p in list_images(args.pred)}
    refs = {p.stem: p for p in list_images(args.ref)}
    names = sorted(set(preds) & set(refs))
    if not names:
        raise ConfigError("no matching file names between --pred and --ref")
    rows = []
    for n in names:
        a, b = load_image(refs[n]), load_image(preds[n])
        rows.append({"image": n, "psnr": metrics.psnr(a, b), "ssim": metrics.ssim(a, b), "hf_energy": metrics.hf_energy(b)})
    mean = {k: float(np.mean([r[k] for r in rows])) for k in ("psnr", "ssim", "hf_energy")}
    rows.append({"image": "MEAN", **mean})
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["image", "psnr", "ssim", "hf_energy"])
        w.writeheader()
        w.writerows(rows)
    print(f"mean psnr={mean['psnr']:.3f} ssim={mean['ssim']:.4f} hf_energy={mean['hf_energy']:.5f}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _config(args)
    values = [float(v) for v in args.values.split(",")]
    if args.param == "steps":
        values = [int(v) for v in values]
    teacher = None
    if args.teacher:
        teacher, _ = ckpt.load_denoiser(args.teacher, expected_schedule=cfg.schedule.build())
        cfg = replace(cfg, denoiser=teacher.arch)
    rows = run_sweep(cfg, args.param, values, teacher=teacher, out_dir=args.out)
    write_manifest(args.out, cfg, f"sweep {args.param}", {"values": values})
    print(format_table(rows))
    return EXIT_OK


def cmd_plot_weighting(args) -> int:
    cfg = _config(args)
    plot_weighting(cfg.weighting, cfg.schedule.build(), cfg.sts, args.out)
    print(f"wrote {Path(args.out) / 'weighting_ratio.csv'} and weighting_ratio.png")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="addsr", description="Toy-scale adversarial diffusion distillation for super-resolution")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pretrain-teacher", help="train the multi-step conditional teacher")
    _add_common(p)
    p.add_argument("--data", help="image folder (default: procedural textures)")
    p.add_argument("--patch-size", type=int)
    p.add_argument("--teacher-steps", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pretrain_teacher)

    p = sub.add_parser("distill", help="distill a few-step student from a teacher")
    _add_common(p, weighting=True)
    p.add_argument("--teacher", required=True, help="teacher.npz from pretrain-teacher")
    p.add_argument("--data")
    p.add_argument("--patch-size", type=int)
    p.add_argument("--distill-steps", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--teacher-cond", choices=["hr", "lr"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("infer", help="restore LR images with the student")
    _add_common(p)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--steps", type=int, default=4)
    p.add_argument("--blend-r", type=float, default=1.0)
    p.add_argument("--scale", type=int, default=4)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dump-chain", action="store_true", help="also save every condition image")
    p.set_defaults(func=cmd_infer, seed=0)

    p = sub.add_parser("degrade", help="synthesize LR images from HR images")
    _add_common(p)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--pipeline", choices=sorted(FIXED_PIPELINES))
    g.add_argument("--random", action="store_true", help="sample a training degradation per image")
    p.add_argument("--order", type=int, choices=[1, 2])
    p.add_argument("--scale", type=int, default=4)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_degrade, seed=0)

    p = sub.add_parser("eval", help="PSNR / SSIM / hf_energy CSV for matching image pairs")
    p.add_argument("--pred", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--out", required=True, help="CSV path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="hyper-parameter sweep table")
    _add_common(p, weighting=True)
    p.add_argument("--param", required=True, help="mu, nu, gamma, kappa, blend_r or steps")
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--teacher", help="reuse a trained teacher")
    p.add_argument("--data")
    p.add_argument("--teacher-steps", type=int)
    p.add_argument("--distill-steps", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("plot-weighting", help="weighting-ratio CSV and figure")
    _add_common(p, weighting=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot_weighting)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ckpt.CheckpointError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NonFiniteLossError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
