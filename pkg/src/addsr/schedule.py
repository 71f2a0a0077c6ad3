"""Noise schedule, forward diffusion, x0-prediction and student timesteps.

Timesteps are 1-indexed: ``alpha_bar(t)`` for ``t`` in ``[1, T]`` reads
``alpha_bars[t - 1]`` and ``alpha_bar(0)`` is defined as 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import torch


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-timestep betas and cumulative products ``alpha_bar_t = prod(1 - beta_i)``."""

    betas: np.ndarray
    alpha_bars: np.ndarray = field(repr=False)
    beta_start: float = 1e-4
    beta_end: float = 0.02

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=np.float64)
        alpha_bars = np.asarray(self.alpha_bars, dtype=np.float64)
        if betas.ndim != 1 or betas.size == 0:
            raise ValueError("betas must be a non-empty vector")
        if alpha_bars.shape != betas.shape:
            raise ValueError("alpha_bars and betas must have the same length")
        betas.setflags(write=False)
        alpha_bars.setflags(write=False)
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "alpha_bars", alpha_bars)

    @property
    def T(self) -> int:
        return int(self.betas.size)

    def check_timestep(self, t) -> None:
        arr = np.asarray(t.detach().cpu() if torch.is_tensor(t) else t)
        if arr.size == 0:
            raise ValueError("empty timestep array")
        if not np.all(arr == np.round(arr)):
            raise ValueError(f"timesteps must be integers, got {t!r}")
        if arr.min() < 1 or arr.max() > self.T:
            raise ValueError(f"timestep out of range [1, {self.T}]: {t!r}")

    def alpha_bar(self, t) -> float | np.ndarray:
        """Cumulative product at timestep ``t`` (``alpha_bar(0) == 1``)."""
        arr = np.asarray(t)
        if np.any(arr < 0) or np.any(arr > self.T):
            raise ValueError(f"timestep out of range [0, {self.T}]: {t!r}")
        padded = np.concatenate([[1.0], self.alpha_bars])
        out = padded[arr.astype(np.int64)]
        return float(out) if out.ndim == 0 else out

    def to_dict(self) -> dict:
        return {"T": self.T, "beta_start": self.beta_start, "beta_end": self.beta_end}

    @classmethod
    def from_dict(cls, d: Mapping) -> "NoiseSchedule":
        return build_schedule(int(d["T"]), float(d["beta_start"]), float(d["beta_end"]))

    def __eq__(self, other):
        if not isinstance(other, NoiseSchedule):
            return NotImplemented
        return np.array_equal(self.betas, other.betas)

    def __hash__(self):
        return hash(self.betas.tobytes())


def schedule_from_betas(betas: Sequence[float]) -> NoiseSchedule:
    betas = np.asarray(betas, dtype=np.float64)
    if betas.ndim != 1 or betas.size == 0:
        raise ValueError("betas must be a non-empty vector")
    if np.any(betas <= 0) or np.any(betas >= 1):
        raise ValueError("every beta must lie in (0, 1)")
    return NoiseSchedule(
        betas=betas,
        alpha_bars=np.cumprod(1.0 - betas),
        beta_start=float(betas[0]),
        beta_end=float(betas[-1]),
    )


def build_schedule(T: int = 1000, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    """Linear beta schedule from ``beta_start`` to ``beta_end`` over ``T`` steps."""
    if int(T) != T or T < 1:
        raise ValueError(f"T must be a positive integer, got {T!r}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError(
            f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
        )
    betas = np.linspace(beta_start, beta_end, int(T), dtype=np.float64)
    sched = schedule_from_betas(betas)
    return NoiseSchedule(sched.betas, sched.alpha_bars, float(beta_start), float(beta_end))


def _coef(values: np.ndarray, like):
    """Broadcast per-sample coefficients against ``like``'s leading axis."""
    if torch.is_tensor(like):
        c = torch.as_tensor(values, dtype=like.dtype, device=like.device)
        if c.ndim == 1:
            c = c.reshape(-1, *([1] * (like.ndim - 1)))
        return c
    c = np.asarray(values, dtype=np.float64)
    if c.ndim == 1:
        c = c.reshape(-1, *([1] * (np.ndim(like) - 1)))
    return c


def _timestep_values(t):
    if torch.is_tensor(t):
        return t.detach().cpu().numpy()
    return np.asarray(t)


def diffuse(x0, eps, alpha_bar):
    """``sqrt(a) * x0 + sqrt(1 - a) * eps`` for an explicit cumulative product ``a``."""
    a = np.asarray(alpha_bar, dtype=np.float64)
    if np.any(a < 0) or np.any(a > 1):
        raise ValueError("alpha_bar must lie in [0, 1]")
    return _coef(np.sqrt(a), x0) * x0 + _coef(np.sqrt(1.0 - a), eps) * eps


def x0_from_eps(x_s, eps_hat, alpha_bar):
    """Invert :func:`diffuse` given a noise estimate."""
    a = np.asarray(alpha_bar, dtype=np.float64)
    if np.any(a <= 0):
        raise ZeroDivisionError("alpha_bar == 0: x0 cannot be recovered at a terminal timestep")
    if np.any(a > 1):
        raise ValueError("alpha_bar must lie in (0, 1]")
    return (x_s - _coef(np.sqrt(1.0 - a), eps_hat) * eps_hat) / _coef(np.sqrt(a), x_s)


def _check_shapes(a, b, what: str):
    if tuple(a.shape) != tuple(b.shape):
        raise ValueError(f"{what} shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")


def forward_diffuse(x0, s, eps, sched: NoiseSchedule):
    """Noise ``x0`` to timestep ``s``.

    ``s`` is an int or a per-sample vector of timesteps in ``[1, T]``.
    Works on numpy arrays and torch tensors alike.
    """
    _check_shapes(x0, eps, "x0/eps")
    sched.check_timestep(s)
    return diffuse(x0, eps, sched.alpha_bar(_timestep_values(s)))


def predict_x0(x_s, s, eps_hat, sched: NoiseSchedule):
    """Estimate the clean image from ``x_s`` and predicted noise ``eps_hat``."""
    _check_shapes(x_s, eps_hat, "x_s/eps_hat")
    sched.check_timestep(s)
    return x0_from_eps(x_s, eps_hat, sched.alpha_bar(_timestep_values(s)))


@dataclass(frozen=True)
class StudentTimestepSet:
    """Anchor timesteps of the few-step student, largest first.

    ``step_of[anchor]`` is the 1-based inference step at which that anchor is used.
    """

    anchors: tuple[int, ...] = (999, 749, 499, 249)

    def __post_init__(self):
        anchors = tuple(int(a) for a in self.anchors)
        if len(anchors) == 0:
            raise ValueError("need at least one anchor")
        if any(b >= a for a, b in zip(anchors, anchors[1:])):
            raise ValueError(f"anchors must be strictly decreasing: {anchors}")
        if min(anchors) < 0:
            raise ValueError("anchors must be non-negative")
        gaps = {a - b for a, b in zip(anchors, anchors[1:])}
        if len(gaps) > 1:
            raise ValueError(f"anchors must be uniformly spaced: {anchors}")
        object.__setattr__(self, "anchors", anchors)

    @classmethod
    def uniform(cls, T: int = 1000, n: int = 4) -> "StudentTimestepSet":
        """``n`` anchors spaced ``T // n`` apart, starting from ``T - 1``."""
        gap = T // n
        return cls(tuple(T - 1 - i * gap for i in range(n)))

    @property
    def step_of(self) -> dict[int, int]:
        return {a: i + 1 for i, a in enumerate(self.anchors)}

    def __len__(self) -> int:
        return len(self.anchors)

    def anchor_of(self, step: int) -> int:
        if not 1 <= step <= len(self.anchors):
            raise ValueError(f"inference step {step} outside 1..{len(self.anchors)}")
        return self.anchors[step - 1]


def project_step(s: int, sts: StudentTimestepSet) -> int:
    """Map a student anchor timestep to its inference-step index (``999 -> 1``)."""
    try:
        return sts.step_of[int(s)]
    except (KeyError, TypeError, ValueError):
        raise ValueError(f"timestep {s!r} is not a student anchor {sts.anchors}") from None
