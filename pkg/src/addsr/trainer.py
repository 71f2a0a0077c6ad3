"""Teacher pretraining and timestep-adaptive adversarial distillation of the student."""

from __future__ import annotations

import copy
import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import torch

from . import sampler
from .networks import (
    Denoiser,
    DenoiserArch,
    Discriminator,
    DiscriminatorArch,
    checksum,
    denoise_eps,
    discriminate,
    resize_condition,
)
from .objective import (
    WeightingParams,
    generator_adv_loss,
    adversarial_losses,
    ta_distill_loss,
    total_loss,
    weight_d_batch,
)
from .sampler import ConditionChain
from .schedule import NoiseSchedule, StudentTimestepSet, forward_diffuse, predict_x0

log = logging.getLogger(__name__)

LOG_COLUMNS = ("step", "dis_loss", "g_adv", "d_loss", "ratio")
MIN_TEACHER_PATCHES = 100


class NonFiniteLossError(RuntimeError):
    pass


def seeded_init(factory: Callable[[], torch.nn.Module], seed: int) -> torch.nn.Module:
    """Build a module with a private, seeded torch RNG."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return factory()


@dataclass(frozen=True)
class TeacherConfig:
    steps: int = 2000
    batch_size: int = 16
    lr: float = 2e-4
    seed: int = 0
    # "eps": plain noise-prediction MSE.  "v": the same residual divided by alpha_bar_t,
    # i.e. MSE on the velocity target, which keeps the high-t x0 estimate trained.
    loss: str = "eps"

    def __post_init__(self):
        if self.loss not in ("eps", "v"):
            raise ValueError(f"teacher loss must be 'eps' or 'v', got {self.loss!r}")


@dataclass(frozen=True)
class DistillConfig:
    steps: int = 1000
    batch_size: int = 4
    lr: float = 2e-5
    disc_lr: float = 2e-5
    adam_betas: tuple[float, float] = (0.9, 0.999)
    teacher_cond: str = "hr"
    seed: int = 0

    def __post_init__(self):
        if self.teacher_cond not in ("hr", "lr"):
            raise ValueError(f"teacher_cond must be 'hr' or 'lr', got {self.teacher_cond!r}")


def pretrain_teacher(
    dataset,
    cfg: TeacherConfig = TeacherConfig(),
    sched: Optional[NoiseSchedule] = None,
    arch: DenoiserArch = DenoiserArch(),
    on_step: Optional[Callable[[int, float], None]] = None,
) -> Denoiser:
    """Fit a conditional noise predictor ``E||eps - eps_psi(x_s, s, x_LR)||^2``."""
    if dataset is None or len(dataset) == 0:
        raise ValueError("empty dataset")
    if len(dataset) < MIN_TEACHER_PATCHES:
        raise ValueError(f"need at least {MIN_TEACHER_PATCHES} training patches, got {len(dataset)}")
    if sched is None:
        raise ValueError("a NoiseSchedule is required")
    net = seeded_init(lambda: Denoiser(arch, sched.alpha_bars), cfg.seed)
    opt = torch.optim.Adam(net.parameters(), lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    gen = torch.Generator().manual_seed(cfg.seed)
    net.train()
    for step in range(cfg.steps):
        x0, x_lr = dataset.sample_batch(rng, cfg.batch_size)
        t = torch.randint(1, sched.T + 1, (x0.shape[0],), generator=gen)
        eps = torch.randn(x0.shape, generator=gen)
        x_t = forward_diffuse(x0, t, eps, sched)
        resid = (denoise_eps(net, x_t, t, x_lr) - eps).pow(2).flatten(1).mean(dim=1)
        if cfg.loss == "v":
            resid = resid / net.alpha_bars[t - 1].to(resid.dtype)
        loss = resid.mean()
        if not torch.isfinite(loss):
            raise NonFiniteLossError(f"teacher loss became non-finite at step {step}")
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()
        if on_step is not None:
            on_step(step, float(loss.detach()))
    net.eval()
    return net


@dataclass
class TrainState:
    student: Denoiser
    teacher: Denoiser
    disc: Discriminator
    opt_student: torch.optim.Optimizer
    opt_disc: torch.optim.Optimizer
    sched: NoiseSchedule
    sts: StudentTimestepSet
    wp: WeightingParams
    cfg: DistillConfig
    step: int = 0
    generator: torch.Generator = field(default_factory=torch.Generator)
    rng: np.random.Generator = field(default_factory=np.random.default_rng)

    @property
    def scale(self) -> int:
        return self.disc.arch.scale


def freeze(net: torch.nn.Module) -> torch.nn.Module:
    net.eval()
    for p in net.parameters():
        p.requires_grad_(False)
    return net


def init_train_state(
    teacher: Denoiser,
    sched: NoiseSchedule,
    sts: StudentTimestepSet = StudentTimestepSet(),
    wp: WeightingParams = WeightingParams(),
    cfg: DistillConfig = DistillConfig(),
    disc_arch: DiscriminatorArch = DiscriminatorArch(),
    student: Optional[Denoiser] = None,
) -> TrainState:
    """Student starts as a copy of the teacher unless one is given."""
    teacher = freeze(teacher)
    student = copy.deepcopy(teacher) if student is None else student
    student.train()
    for p in student.parameters():
        p.requires_grad_(True)
    disc = seeded_init(lambda: Discriminator(disc_arch), cfg.seed + 1)
    return TrainState(
        student=student,
        teacher=teacher,
        disc=disc,
        opt_student=torch.optim.Adam(student.parameters(), lr=cfg.lr, betas=cfg.adam_betas),
        opt_disc=torch.optim.Adam(disc.parameters(), lr=cfg.disc_lr, betas=cfg.adam_betas),
        sched=sched,
        sts=sts,
        wp=wp,
        cfg=cfg,
        generator=torch.Generator().manual_seed(cfg.seed),
        rng=np.random.default_rng(cfg.seed),
    )


def build_condition_chain(
    student: Denoiser,
    x_lr: torch.Tensor,
    k: int,
    sts: StudentTimestepSet,
    sched: NoiseSchedule,
    generator: Optional[torch.Generator] = None,
    scale: int = 4,
) -> ConditionChain:
    """Conditions for inference steps ``1..k``, produced by the inference sampler itself."""
    if not 1 <= k <= len(sts):
        raise ValueError(f"k must be in 1..{len(sts)}, got {k}")
    if k == 1:
        return ConditionChain([x_lr])
    with torch.no_grad():
        x_hat, chain = sampler.psr_sample(
            student, x_lr, k - 1, 1.0, sts=sts, sched=sched, generator=generator, scale=scale
        )
    chain.elements.append(x_hat)
    return chain


def _student_conditions(state: TrainState, x_lr: torch.Tensor, ks: torch.Tensor, hr_size) -> torch.Tensor:
    cond = torch.empty((x_lr.shape[0], x_lr.shape[1]) + tuple(hr_size), dtype=x_lr.dtype)
    was_training = state.student.training
    state.student.eval()
    for k in sorted(set(ks.tolist())):
        idx = (ks == k).nonzero(as_tuple=True)[0]
        chain = build_condition_chain(
            state.student, x_lr[idx], k, state.sts, state.sched, state.generator, state.scale
        )
        cond[idx] = resize_condition(chain[k - 1], hr_size)
    state.student.train(was_training)
    return cond


def distill_step(state: TrainState, batch, wp: Optional[WeightingParams] = None) -> tuple[dict, TrainState]:
    """One generator update and one discriminator update; returns per-term losses."""
    wp = state.wp if wp is None else wp
    x0, x_lr = batch
    if x0.shape[0] == 0:
        raise ValueError("empty batch")
    b = x0.shape[0]
    sts, sched, g = state.sts, state.sched, state.generator
    hr_size = x0.shape[-2:]

    # student: one anchor per sample, conditioned on the matching chain element
    ks = torch.randint(1, len(sts) + 1, (b,), generator=g)
    s = torch.tensor([sts.anchor_of(int(k)) for k in ks])
    cond = _student_conditions(state, x_lr, ks, hr_size)
    eps = torch.randn(x0.shape, generator=g)
    x_s = forward_diffuse(x0, s, eps, sched)
    student_x0 = predict_x0(x_s, s, denoise_eps(state.student, x_s, s, cond), sched)
    if not torch.isfinite(student_x0).all():
        raise NonFiniteLossError(f"student produced non-finite x0 estimates at step {state.step}")

    # teacher: re-noise the student estimate to a uniformly drawn t
    t = torch.randint(1, sched.T + 1, (b,), generator=g)
    eps_t = torch.randn(x0.shape, generator=g)
    with torch.no_grad():
        x_theta_t = forward_diffuse(student_x0.detach(), t, eps_t, sched)
        teacher_cond = x0 if state.cfg.teacher_cond == "hr" else x_lr
        teacher_x0 = predict_x0(
            x_theta_t, t, denoise_eps(state.teacher, x_theta_t, t, teacher_cond), sched
        ).clamp(-1.0, 1.0)

    d = weight_d_batch(s, t, sched, sts, wp)
    dis = ta_distill_loss(student_x0, teacher_x0, d)
    state.disc.requires_grad_(False)
    g_adv = generator_adv_loss(discriminate(state.disc, student_x0, x_lr))
    state.disc.requires_grad_(True)
    loss = total_loss(dis, g_adv, wp)
    if not torch.isfinite(loss):
        raise NonFiniteLossError(
            f"non-finite generator loss at step {state.step}: dis={float(dis)}, g_adv={float(g_adv)}"
        )
    state.opt_student.zero_grad(set_to_none=True)
    loss.backward()
    state.opt_student.step()

    logit_real = discriminate(state.disc, x0, x_lr)
    logit_fake = discriminate(state.disc, student_x0.detach(), x_lr)
    _, d_loss = adversarial_losses(logit_real, logit_fake)
    state.opt_disc.zero_grad(set_to_none=True)
    d_loss.backward()
    state.opt_disc.step()

    state.step += 1
    report = {
        "step": state.step,
        "dis_loss": float(dis.detach()),
        "g_adv": float(g_adv.detach()),
        "d_loss": float(d_loss.detach()),
        "ratio": float((wp.lam / d).mean()),
    }
    return report, state


def train_distill(
    state: TrainState,
    dataset,
    steps: int,
    log_path: Optional[str | Path] = None,
    on_step: Optional[Callable[[dict], None]] = None,
) -> TrainState:
    """Run ``steps`` distillation steps, appending one CSV row per step to ``log_path``."""
    writer = fh = None
    if log_path is not None:
        log_path = Path(log_path)
        new = not log_path.exists()
        fh = open(log_path, "a", newline="")
        writer = csv.DictWriter(fh, fieldnames=LOG_COLUMNS)
        if new:
            writer.writeheader()
    try:
        for _ in range(steps):
            batch = dataset.sample_batch(state.rng, state.cfg.batch_size)
            report, state = distill_step(state, batch)
            if writer is not None:
                writer.writerow({k: repr(report[k]) if isinstance(report[k], float) else report[k] for k in LOG_COLUMNS})
            if on_step is not None:
                on_step(report)
    finally:
        if fh is not None:
            fh.close()
    return state


def teacher_checksum(state: TrainState) -> str:
    return checksum(state.teacher)
