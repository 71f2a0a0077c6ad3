"""Toy-scale conditional denoiser and conditional discriminator (pixel space, [-1, 1])."""

from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass(frozen=True)
class DenoiserArch:
    channels: tuple[int, int, int] = (32, 64, 64)
    cond_channels: tuple[int, int, int] = (16, 32, 32)
    temb_dim: int = 64
    groups: int = 8
    image_channels: int = 3
    num_timesteps: int = 1000
    num_classes: Optional[int] = None
    prediction: str = "v"  # internal parametrization; the output is always noise

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels"] = list(self.channels)
        d["cond_channels"] = list(self.cond_channels)
        return d

    @classmethod
    def from_dict(cls, d) -> "DenoiserArch":
        d = dict(d)
        d["channels"] = tuple(d["channels"])
        d["cond_channels"] = tuple(d["cond_channels"])
        return cls(**d)


@dataclass(frozen=True)
class DiscriminatorArch:
    channels: tuple[int, int, int, int] = (16, 32, 64, 64)
    cond_channels: tuple[int, int] = (16, 32)
    embed_dim: int = 64
    image_channels: int = 3
    scale: int = 4

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels"] = list(self.channels)
        d["cond_channels"] = list(self.cond_channels)
        return d

    @classmethod
    def from_dict(cls, d) -> "DiscriminatorArch":
        d = dict(d)
        d["channels"] = tuple(d["channels"])
        d["cond_channels"] = tuple(d["cond_channels"])
        return cls(**d)


def zero_module(module: nn.Module) -> nn.Module:
    for p in module.parameters():
        nn.init.zeros_(p)
    return module


def timestep_embedding(t: torch.Tensor, dim: int, max_period: float = 10000.0) -> torch.Tensor:
    """Sinusoidal embedding of (possibly fractional) timesteps, shape (B, dim)."""
    half = dim // 2
    freqs = torch.exp(-math.log(max_period) * torch.arange(half, dtype=torch.float32) / half)
    args = t.float()[:, None] * freqs[None, :]
    emb = torch.cat([torch.cos(args), torch.sin(args)], dim=-1)
    if dim % 2:
        emb = F.pad(emb, (0, 1))
    return emb


def _norm(ch: int, groups: int) -> nn.GroupNorm:
    g = math.gcd(ch, groups)
    return nn.GroupNorm(g, ch)


class ResBlock(nn.Module):
    """Residual block with scale-shift timestep modulation of the second norm."""

    def __init__(self, in_ch: int, out_ch: int, temb_dim: int, groups: int):
        super().__init__()
        self.norm1 = _norm(in_ch, groups)
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.temb = nn.Linear(temb_dim, 2 * out_ch)
        self.norm2 = _norm(out_ch, groups)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        self.skip = nn.Conv2d(in_ch, out_ch, 1) if in_ch != out_ch else nn.Identity()

    def forward(self, x, temb):
        h = self.conv1(F.silu(self.norm1(x)))
        scale, shift = self.temb(temb)[:, :, None, None].chunk(2, dim=1)
        h = self.norm2(h) * (1 + scale) + shift
        h = self.conv2(F.silu(h))
        return self.skip(x) + h


class ControlBranch(nn.Module):
    """Encodes the condition image into one feature map per scale.

    Each output passes through a zero-initialized 1x1 projection, so the
    branch contributes nothing until training moves those weights.
    """

    def __init__(self, arch: DenoiserArch):
        super().__init__()
        c0, c1, c2 = arch.cond_channels
        m0, m1, m2 = arch.channels
        self.conv_in = nn.Conv2d(arch.image_channels, c0, 3, padding=1)
        self.block0 = nn.Conv2d(c0, c0, 3, padding=1)
        self.down1 = nn.Conv2d(c0, c1, 3, stride=2, padding=1)
        self.down2 = nn.Conv2d(c1, c2, 3, stride=2, padding=1)
        self.zero0 = zero_module(nn.Conv2d(c0, m0, 1))
        self.zero1 = zero_module(nn.Conv2d(c1, m1, 1))
        self.zero2 = zero_module(nn.Conv2d(c2, m2, 1))

    def forward(self, cond):
        h0 = F.silu(self.block0(F.silu(self.conv_in(cond))))
        h1 = F.silu(self.down1(h0))
        h2 = F.silu(self.down2(h1))
        return self.zero0(h0), self.zero1(h1), self.zero2(h2)


class Denoiser(nn.Module):
    """Three-scale residual encoder-decoder predicting the noise in ``x_s``.

    With ``arch.prediction == "v"`` the trunk outputs ``v = sqrt(a) eps - sqrt(1 - a) x0``
    and the noise is recovered as ``sqrt(1 - a) x_s + sqrt(a) v``.  This keeps the
    implied x0 estimate bounded at the noisiest anchors, where ``1 / sqrt(a)`` is huge.
    """

    def __init__(self, arch: DenoiserArch = DenoiserArch(), alpha_bars=None):
        super().__init__()
        if arch.prediction not in ("eps", "v"):
            raise ValueError(f"prediction must be 'eps' or 'v', got {arch.prediction!r}")
        self.arch = arch
        if alpha_bars is None:
            from .schedule import build_schedule

            alpha_bars = build_schedule(arch.num_timesteps).alpha_bars
        alpha_bars = torch.tensor(np.array(alpha_bars, dtype=np.float64))
        if alpha_bars.shape != (arch.num_timesteps,):
            raise ValueError(f"alpha_bars must have length {arch.num_timesteps}")
        self.register_buffer("alpha_bars", alpha_bars)
        c0, c1, c2 = arch.channels
        td, g = arch.temb_dim, arch.groups
        self.time_mlp = nn.Sequential(nn.Linear(td, td), nn.SiLU(), nn.Linear(td, td))
        self.label_emb = nn.Embedding(arch.num_classes, td) if arch.num_classes else None

        self.conv_in = nn.Conv2d(arch.image_channels, c0, 3, padding=1)
        self.enc0 = ResBlock(c0, c0, td, g)
        self.down1 = nn.Conv2d(c0, c1, 3, stride=2, padding=1)
        self.enc1 = ResBlock(c1, c1, td, g)
        self.down2 = nn.Conv2d(c1, c2, 3, stride=2, padding=1)
        self.mid = ResBlock(c2, c2, td, g)
        self.up2 = nn.Conv2d(c2, c1, 3, padding=1)
        self.dec1 = ResBlock(2 * c1, c1, td, g)
        self.up1 = nn.Conv2d(c1, c0, 3, padding=1)
        self.dec0 = ResBlock(2 * c0, c0, td, g)
        self.norm_out = _norm(c0, g)
        self.conv_out = nn.Conv2d(c0, arch.image_channels, 3, padding=1)

        self.control = ControlBranch(arch)

    def forward(self, x, t, cond, label=None):
        temb = self.time_mlp(timestep_embedding(t, self.arch.temb_dim))
        if self.label_emb is not None and label is not None:
            temb = temb + self.label_emb(label)
        ctrl0, ctrl1, ctrl2 = self.control(cond)

        h0 = self.enc0(self.conv_in(x) + ctrl0, temb)
        h1 = self.enc1(self.down1(h0) + ctrl1, temb)
        h2 = self.mid(self.down2(h1) + ctrl2, temb)
        u1 = self.up2(F.interpolate(h2, size=h1.shape[-2:], mode="nearest"))
        u1 = self.dec1(torch.cat([u1, h1], dim=1), temb)
        u0 = self.up1(F.interpolate(u1, size=h0.shape[-2:], mode="nearest"))
        u0 = self.dec0(torch.cat([u0, h0], dim=1), temb)
        out = self.conv_out(F.silu(self.norm_out(u0)))
        if self.arch.prediction == "eps":
            return out
        a = self.alpha_bars[t - 1].to(x.dtype)[:, None, None, None]
        return (1.0 - a).sqrt() * x + a.sqrt() * out


def _timesteps_tensor(s, batch: int, num_timesteps: int) -> torch.Tensor:
    t = torch.as_tensor(s)
    if t.ndim == 0:
        t = t.expand(batch)
    if t.shape != (batch,):
        raise ValueError(f"timestep tensor must have shape ({batch},), got {tuple(t.shape)}")
    if t.is_floating_point() and not torch.equal(t, t.round()):
        raise ValueError("timesteps must be integers")
    if int(t.min()) < 1 or int(t.max()) > num_timesteps:
        raise ValueError(f"timestep out of range [1, {num_timesteps}]")
    return t.long()


def resize_condition(cond: torch.Tensor, size) -> torch.Tensor:
    """Bicubic resize of a condition image to ``size`` (no-op if already there)."""
    if tuple(cond.shape[-2:]) == tuple(size):
        return cond
    return F.interpolate(cond, size=tuple(size), mode="bicubic", align_corners=False)


def denoise_eps(net: nn.Module, x_s: torch.Tensor, s, cond: torch.Tensor, label=None) -> torch.Tensor:
    """Predict the noise in ``x_s`` at timestep(s) ``s`` given a condition image.

    ``cond`` is bicubic-resized to the spatial size of ``x_s`` first.
    """
    if x_s.ndim != 4 or cond.ndim != 4:
        raise ValueError("x_s and cond must be (B, C, H, W) tensors")
    if cond.shape[0] != x_s.shape[0] or cond.shape[1] != x_s.shape[1]:
        raise ValueError(f"batch/channel mismatch: x_s {tuple(x_s.shape)} vs cond {tuple(cond.shape)}")
    t = _timesteps_tensor(s, x_s.shape[0], net.arch.num_timesteps)
    cond = resize_condition(cond, x_s.shape[-2:])
    if cond.shape != x_s.shape:
        raise ValueError(f"resolution mismatch after resize: {tuple(cond.shape)} vs {tuple(x_s.shape)}")
    return net(x_s, t, cond, label)


class Discriminator(nn.Module):
    """Strided conv encoder on the HR image with projection conditioning on an LR embedding."""

    def __init__(self, arch: DiscriminatorArch = DiscriminatorArch()):
        super().__init__()
        self.arch = arch
        chans = (arch.image_channels,) + tuple(arch.channels)
        self.encoder = nn.ModuleList(
            nn.Conv2d(chans[i], chans[i + 1], 4 if i < 2 else 3, stride=2, padding=1)
            for i in range(len(arch.channels))
        )
        feat = arch.channels[-1]
        c0, c1 = arch.cond_channels
        self.cond_encoder = nn.Sequential(
            nn.Conv2d(arch.image_channels, c0, 3, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(c0, c1, 3, stride=2, padding=1),
            nn.LeakyReLU(0.2),
        )
        self.cond_proj = nn.Linear(c1, arch.embed_dim)
        self.feat_proj = nn.Linear(feat, arch.embed_dim)
        self.out = nn.Linear(feat, 1)

    def forward(self, img, cond_img):
        h = img
        for conv in self.encoder:
            h = F.leaky_relu(conv(h), 0.2)
        h = h.mean(dim=(2, 3))
        e = self.cond_proj(self.cond_encoder(cond_img).mean(dim=(2, 3)))
        proj = (self.feat_proj(h) * e).sum(dim=1) / math.sqrt(self.arch.embed_dim)
        return self.out(h).squeeze(1) + proj


def discriminate(d: Discriminator, img: torch.Tensor, cond_img: torch.Tensor) -> torch.Tensor:
    """One real logit per image, conditioned on the LR image."""
    if img.ndim != 4 or cond_img.ndim != 4:
        raise ValueError("img and cond_img must be (B, C, H, W) tensors")
    sc = d.arch.scale
    if img.shape[0] != cond_img.shape[0] or (img.shape[-2], img.shape[-1]) != (
        cond_img.shape[-2] * sc,
        cond_img.shape[-1] * sc,
    ):
        raise ValueError(
            f"resolution mismatch: img {tuple(img.shape)} must be x{sc} of cond {tuple(cond_img.shape)}"
        )
    return d(img, cond_img)


def param_count(net: nn.Module) -> int:
    return sum(p.numel() for p in net.parameters())


def checksum(net: nn.Module) -> str:
    """SHA-256 over all parameters and buffers in state-dict order."""
    h = hashlib.sha256()
    for name, v in net.state_dict().items():
        h.update(name.encode())
        h.update(v.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()
