"""Timestep-adaptive ADD objective.

The distillation weight is ``d(s, t) = sqrt(alpha_bar_t) * f(p(s))`` where
``p`` maps the student anchor to its inference step and ``f`` is one of

* ``exponential``: ``mu * nu ** (p - 1)``
* ``linear``: ``gamma * p + kappa``
* ``constant``: ``1`` (plain ADD weighting, same ratio for every student step)
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from typing import Mapping

import numpy as np
import torch
import torch.nn.functional as F

from .schedule import NoiseSchedule, StudentTimestepSet, project_step

FORMS = ("exponential", "linear", "constant")


@dataclass(frozen=True)
class WeightingParams:
    form: str = "exponential"
    mu: float = 0.5
    nu: float = 2.1
    gamma: float = 0.4
    kappa: float = 0.5
    lam: float = 0.02

    def __post_init__(self):
        if self.form not in FORMS:
            raise ValueError(f"form must be one of {FORMS}, got {self.form!r}")
        if self.mu <= 0 or self.nu <= 0:
            raise ValueError("mu and nu must be positive")
        if self.gamma < 0 or self.kappa < 0:
            raise ValueError("gamma and kappa must be non-negative")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "WeightingParams":
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        return cls(**d)

    def with_(self, **kw) -> "WeightingParams":
        if "lambda" in kw:
            kw["lam"] = kw.pop("lambda")
        return replace(self, **kw)


PRESETS = {
    "perception": WeightingParams(form="exponential", mu=0.5, nu=2.1),
    "fidelity": WeightingParams(form="exponential", mu=0.7, nu=2.1),
}


def step_factor(p: int, wp: WeightingParams) -> float:
    """Student-step factor of the weight: everything except ``sqrt(alpha_bar_t)``."""
    if wp.form == "exponential":
        f = wp.mu * wp.nu ** (p - 1)
    elif wp.form == "linear":
        f = wp.gamma * p + wp.kappa
    else:
        f = 1.0
    if not f > 0:
        raise ValueError(f"weighting factor must be positive, got {f} at step {p}")
    return f


def weight_d(s: int, t: int, sched: NoiseSchedule, sts: StudentTimestepSet, wp: WeightingParams) -> float:
    p = project_step(s, sts)
    sched.check_timestep(t)
    return math.sqrt(sched.alpha_bar(int(t))) * step_factor(p, wp)


def weight_d_batch(s, t, sched: NoiseSchedule, sts: StudentTimestepSet, wp: WeightingParams) -> torch.Tensor:
    """Per-sample ``d(s_i, t_i)`` as a float32 tensor."""
    s = np.asarray(s.cpu() if torch.is_tensor(s) else s).reshape(-1)
    t = np.asarray(t.cpu() if torch.is_tensor(t) else t).reshape(-1)
    vals = [weight_d(int(si), int(ti), sched, sts, wp) for si, ti in zip(s, t)]
    return torch.tensor(vals, dtype=torch.float32)


def weighting_ratio(s: int, t: int, sched: NoiseSchedule, sts: StudentTimestepSet, wp: WeightingParams) -> float:
    """Adversarial-to-distillation balance ``lambda / d(s, t)``."""
    return wp.lam / weight_d(s, t, sched, sts, wp)


def ta_distill_loss(student_x0: torch.Tensor, teacher_x0: torch.Tensor, d) -> torch.Tensor:
    """``d`` times the pixel MSE; ``d`` may be a scalar or one weight per sample."""
    if student_x0.shape != teacher_x0.shape:
        raise ValueError(f"shape mismatch: {tuple(student_x0.shape)} vs {tuple(teacher_x0.shape)}")
    per_sample = (student_x0 - teacher_x0.detach()).pow(2).flatten(1).mean(dim=1)
    d = torch.as_tensor(d, dtype=per_sample.dtype, device=per_sample.device)
    return (d * per_sample).mean()


def _check_finite(x, name):
    x = torch.as_tensor(x)
    if not torch.isfinite(x).all():
        raise ValueError(f"{name} contains non-finite values")
    return x


def adversarial_losses(logit_real, logit_fake) -> tuple[torch.Tensor, torch.Tensor]:
    """Hinge losses: ``(g_loss, d_loss)`` averaged over the batch."""
    logit_real = _check_finite(logit_real, "logit_real")
    logit_fake = _check_finite(logit_fake, "logit_fake")
    d_loss = F.relu(1.0 - logit_real).mean() + F.relu(1.0 + logit_fake).mean()
    g_loss = -logit_fake.mean()
    return g_loss, d_loss


def generator_adv_loss(logit_fake) -> torch.Tensor:
    return adversarial_losses(torch.zeros(()), logit_fake)[0]


def total_loss(dis, g_adv, wp: WeightingParams):
    return dis + wp.lam * g_adv
