"""Checkpoints: one ``.npz`` archive of named float arrays plus a JSON metadata member."""

from __future__ import annotations

import json
import zipfile
from pathlib import Path
from typing import Mapping, Optional

import numpy as np
import torch

from ..networks import Denoiser, DenoiserArch, Discriminator, DiscriminatorArch
from ..objective import WeightingParams
from ..schedule import NoiseSchedule, StudentTimestepSet
from ..trainer import DistillConfig, TrainState, freeze

FORMAT_VERSION = 1
META_KEY = "__metadata__"


class CheckpointError(RuntimeError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


def _module_arrays(prefix: str, net: torch.nn.Module) -> dict[str, np.ndarray]:
    return {f"{prefix}/{k}": v.detach().cpu().numpy().copy() for k, v in net.state_dict().items()}


def _optim_arrays(prefix: str, opt: torch.optim.Optimizer) -> dict[str, np.ndarray]:
    out = {}
    for idx, st in opt.state_dict()["state"].items():
        for key, v in st.items():
            out[f"{prefix}/{idx}/{key}"] = torch.as_tensor(v).detach().cpu().numpy().copy()
    return out


def save_archive(path: str | Path, arrays: Mapping[str, np.ndarray], meta: Mapping) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = dict(arrays)
    payload[META_KEY] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def load_archive(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        with np.load(path, allow_pickle=False) as z:
            arrays = {k: z[k] for k in z.files}
    except (zipfile.BadZipFile, ValueError, OSError) as e:
        raise CheckpointError(f"corrupt checkpoint {path}: {e}") from e
    if META_KEY not in arrays:
        raise CheckpointError(f"checkpoint {path} is missing member {META_KEY!r}")
    meta = json.loads(arrays.pop(META_KEY).tobytes().decode())
    if meta.get("format_version") != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"checkpoint format version {meta.get('format_version')!r} != {FORMAT_VERSION}"
        )
    return arrays, meta


def _load_module(net: torch.nn.Module, prefix: str, arrays: Mapping[str, np.ndarray]) -> None:
    sd = {}
    for k, ref in net.state_dict().items():
        name = f"{prefix}/{k}"
        if name not in arrays:
            raise CheckpointError(f"checkpoint is missing array {name!r}")
        arr = arrays[name]
        if tuple(arr.shape) != tuple(ref.shape):
            raise CheckpointError(f"array {name!r} has shape {arr.shape}, expected {tuple(ref.shape)}")
        sd[k] = torch.from_numpy(arr.copy())
    net.load_state_dict(sd)


def _load_optim(opt: torch.optim.Optimizer, prefix: str, arrays: Mapping[str, np.ndarray], n_params: int) -> None:
    sd = opt.state_dict()
    state = {}
    for name, arr in arrays.items():
        if not name.startswith(prefix + "/"):
            continue
        idx, key = name[len(prefix) + 1 :].split("/", 1)
        state.setdefault(int(idx), {})[key] = torch.from_numpy(arr.copy())
    sd["state"] = state
    opt.load_state_dict(sd)


def _check_schedule(meta: Mapping, expected: Optional[NoiseSchedule]) -> None:
    if expected is None:
        return
    got = meta.get("schedule")
    if got != expected.to_dict():
        raise CheckpointVersionError(
            f"schedule mismatch: checkpoint has {got}, expected {expected.to_dict()}"
        )


def save_denoiser(path: str | Path, net: Denoiser, sched: NoiseSchedule, extra: Optional[Mapping] = None) -> None:
    meta = {
        "format_version": FORMAT_VERSION,
        "kind": "denoiser",
        "schedule": sched.to_dict(),
        "denoiser_arch": net.arch.to_dict(),
        **(extra or {}),
    }
    save_archive(path, _module_arrays("denoiser", net), meta)


def load_denoiser(path: str | Path, expected_schedule: Optional[NoiseSchedule] = None, which: str = "auto") -> tuple[Denoiser, dict]:
    """Load a denoiser from either a teacher archive or a distillation checkpoint (student by default)."""
    arrays, meta = load_archive(path)
    _check_schedule(meta, expected_schedule)
    if which == "auto":
        which = "denoiser" if meta.get("kind") == "denoiser" else "student"
    net = Denoiser(DenoiserArch.from_dict(meta["denoiser_arch"]))
    _load_module(net, which, arrays)
    net.eval()
    return net, meta


def save_train_state(path: str | Path, state: TrainState, extra: Optional[Mapping] = None) -> None:
    arrays = {}
    arrays.update(_module_arrays("student", state.student))
    arrays.update(_module_arrays("teacher", state.teacher))
    arrays.update(_module_arrays("disc", state.disc))
    arrays.update(_optim_arrays("opt_student", state.opt_student))
    arrays.update(_optim_arrays("opt_disc", state.opt_disc))
    arrays["rng/torch"] = state.generator.get_state().numpy().copy()
    meta = {
        "format_version": FORMAT_VERSION,
        "kind": "train_state",
        "schedule": state.sched.to_dict(),
        "anchors": list(state.sts.anchors),
        "weighting": state.wp.to_dict(),
        "denoiser_arch": state.student.arch.to_dict(),
        "disc_arch": state.disc.arch.to_dict(),
        "distill": {**state.cfg.__dict__, "adam_betas": list(state.cfg.adam_betas)},
        "step": state.step,
        "numpy_rng": state.rng.bit_generator.state,
        **(extra or {}),
    }
    save_archive(path, arrays, meta)


def load_train_state(path: str | Path, expected_schedule: Optional[NoiseSchedule] = None) -> TrainState:
    arrays, meta = load_archive(path)
    if meta.get("kind") != "train_state":
        raise CheckpointError(f"{path} is not a training checkpoint (kind={meta.get('kind')!r})")
    _check_schedule(meta, expected_schedule)
    sched = NoiseSchedule.from_dict(meta["schedule"])
    arch = DenoiserArch.from_dict(meta["denoiser_arch"])
    student, teacher = Denoiser(arch), Denoiser(arch)
    disc = Discriminator(DiscriminatorArch.from_dict(meta["disc_arch"]))
    _load_module(student, "student", arrays)
    _load_module(teacher, "teacher", arrays)
    _load_module(disc, "disc", arrays)
    dcfg = dict(meta["distill"])
    dcfg["adam_betas"] = tuple(dcfg["adam_betas"])
    cfg = DistillConfig(**dcfg)
    opt_s = torch.optim.Adam(student.parameters(), lr=cfg.lr, betas=cfg.adam_betas)
    opt_d = torch.optim.Adam(disc.parameters(), lr=cfg.disc_lr, betas=cfg.adam_betas)
    _load_optim(opt_s, "opt_student", arrays, len(list(student.parameters())))
    _load_optim(opt_d, "opt_disc", arrays, len(list(disc.parameters())))
    if "rng/torch" not in arrays:
        raise CheckpointError("checkpoint is missing array 'rng/torch'")
    gen = torch.Generator()
    gen.set_state(torch.from_numpy(arrays["rng/torch"].copy()))
    rng = np.random.default_rng()
    rng.bit_generator.state = meta["numpy_rng"]
    student.train()
    return TrainState(
        student=student,
        teacher=freeze(teacher),
        disc=disc,
        opt_student=opt_s,
        opt_disc=opt_d,
        sched=sched,
        sts=StudentTimestepSet(tuple(meta["anchors"])),
        wp=WeightingParams.from_dict(meta["weighting"]),
        cfg=cfg,
        step=int(meta["step"]),
        generator=gen,
        rng=rng,
    )


def checkpoint_roundtrip(state: TrainState, path: str | Path) -> TrainState:
    save_train_state(path, state)
    return load_train_state(path, expected_schedule=state.sched)
