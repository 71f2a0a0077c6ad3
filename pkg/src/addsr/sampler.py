"""Few-step self-refining sampler and a multi-step ancestral baseline."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .networks import denoise_eps, resize_condition
from .schedule import NoiseSchedule, StudentTimestepSet, forward_diffuse, predict_x0


@dataclass
class ConditionChain:
    """Conditions consumed by successive inference steps.

    ``elements[0]`` is the LR image; ``elements[k - 1]`` conditioned step ``k``.
    """

    elements: list = field(default_factory=list)

    @property
    def produced_for(self) -> int:
        return len(self.elements)

    def __len__(self):
        return len(self.elements)

    def __getitem__(self, i):
        return self.elements[i]


def blend_condition(x0_hat: torch.Tensor, x_lr_up: torch.Tensor, r: float) -> torch.Tensor:
    """``r * x0_hat + (1 - r) * x_lr_up``; the endpoints return the inputs themselves."""
    if not 0.0 <= r <= 1.0:
        raise ValueError(f"blend ratio must lie in [0, 1], got {r}")
    if x0_hat.shape != x_lr_up.shape:
        raise ValueError(f"shape mismatch: {tuple(x0_hat.shape)} vs {tuple(x_lr_up.shape)}")
    if r == 1.0:
        return x0_hat
    if r == 0.0:
        return x_lr_up
    return r * x0_hat + (1.0 - r) * x_lr_up


def _randn(shape, generator, like):
    return torch.randn(shape, generator=generator, dtype=like.dtype, device=like.device)


@torch.no_grad()
def psr_sample(
    net,
    x_lr: torch.Tensor,
    steps: int,
    blend_r: float = 1.0,
    sts: StudentTimestepSet = StudentTimestepSet(),
    sched: NoiseSchedule | None = None,
    generator: torch.Generator | None = None,
    scale: int = 4,
    label=None,
) -> tuple[torch.Tensor, ConditionChain]:
    """Restore ``x_lr`` in ``steps`` student evaluations.

    Step 1 starts from pure noise at the first anchor, conditioned on the LR
    image.  Each later step re-noises the previous estimate to the next anchor
    with fresh noise and conditions on ``blend(x0_hat, x_lr_up, blend_r)``.
    """
    if sched is None:
        raise ValueError("a NoiseSchedule is required")
    if not 1 <= steps <= len(sts):
        raise ValueError(f"steps must be in 1..{len(sts)}, got {steps}")
    if not 0.0 <= blend_r <= 1.0:
        raise ValueError(f"blend_r must lie in [0, 1], got {blend_r}")
    b, c, h, w = x_lr.shape
    hr_size = (h * scale, w * scale)
    x_lr_up = resize_condition(x_lr, hr_size)

    chain = ConditionChain([x_lr])
    x = _randn((b, c) + hr_size, generator, x_lr)
    x0_hat = None
    for k in range(1, steps + 1):
        s = sts.anchor_of(k)
        if k > 1:
            chain.elements.append(blend_condition(x0_hat, x_lr_up, blend_r))
            x = forward_diffuse(x0_hat, s, _randn(x0_hat.shape, generator, x0_hat), sched)
        eps_hat = denoise_eps(net, x, s, chain[k - 1], label)
        x0_hat = predict_x0(x, s, eps_hat, sched).clamp(-1.0, 1.0)
    return x0_hat, chain


def ancestral_timesteps(T: int, steps: int) -> list[int]:
    """``steps`` evenly spaced timesteps from ``T - 1`` downward."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    gap = max(T // steps, 1)
    ts = [T - 1 - i * gap for i in range(steps)]
    if ts[-1] < 1:
        raise ValueError(f"too many steps ({steps}) for T={T}")
    return ts


@torch.no_grad()
def baseline_sample(
    teacher,
    x_lr: torch.Tensor,
    steps: int,
    sched: NoiseSchedule,
    generator: torch.Generator | None = None,
    scale: int = 4,
    label=None,
) -> torch.Tensor:
    """Ancestral sampling over evenly spaced timesteps, always conditioned on the LR image."""
    ts = ancestral_timesteps(sched.T, steps)
    b, c, h, w = x_lr.shape
    x = _randn((b, c, h * scale, w * scale), generator, x_lr)
    x0_hat = None
    for i, t in enumerate(ts):
        eps_hat = denoise_eps(teacher, x, t, x_lr, label)
        x0_hat = predict_x0(x, t, eps_hat, sched).clamp(-1.0, 1.0)
        if i == len(ts) - 1:
            break
        t_prev = ts[i + 1]
        a_t, a_prev = sched.alpha_bar(t), sched.alpha_bar(t_prev)
        beta = 1.0 - a_t / a_prev
        c0 = np.sqrt(a_prev) * beta / (1.0 - a_t)
        ct = np.sqrt(a_t / a_prev) * (1.0 - a_prev) / (1.0 - a_t)
        var = beta * (1.0 - a_prev) / (1.0 - a_t)
        x = float(c0) * x0_hat + float(ct) * x + float(np.sqrt(var)) * _randn(x.shape, generator, x)
    return x0_hat
