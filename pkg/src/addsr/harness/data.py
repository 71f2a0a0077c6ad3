"""Dataset ingestion: procedural textures or an image folder, degraded into HR/LR pairs."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch
from PIL import Image

from ..degradation import (
    DegradationPipeline,
    TrainingDegradationConfig,
    apply_pipeline,
    random_training_pipeline,
)

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp"}


def _random_colors(rng, n=2):
    return rng.uniform(0, 255, size=(n, 3))


def sinusoid_texture(rng: np.random.Generator, size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    img = np.zeros((size, size))
    for _ in range(rng.integers(1, 3)):
        theta = rng.uniform(0, np.pi)
        period = rng.uniform(3.0, size / 2)
        phase = rng.uniform(0, 2 * np.pi)
        img += np.sin(2 * np.pi * (xx * np.cos(theta) + yy * np.sin(theta)) / period + phase)
    img = (img - img.min()) / max(img.max() - img.min(), 1e-9)
    lo, hi = _random_colors(rng)
    return img[..., None] * hi + (1 - img[..., None]) * lo


def checker_texture(rng: np.random.Generator, size: int) -> np.ndarray:
    cell = int(rng.integers(2, 12))
    oy, ox = rng.integers(0, cell, size=2)
    yy, xx = np.mgrid[0:size, 0:size]
    mask = (((yy + oy) // cell + (xx + ox) // cell) % 2).astype(np.float64)
    lo, hi = _random_colors(rng)
    return mask[..., None] * hi + (1 - mask[..., None]) * lo


def value_noise_texture(rng: np.random.Generator, size: int) -> np.ndarray:
    """Multi-octave smoothly interpolated lattice noise (Perlin-style)."""
    img = np.zeros((size, size, 3))
    amp, total = 1.0, 0.0
    for octave in range(int(rng.integers(2, 5))):
        cells = 2 ** (octave + 1)
        grid = rng.uniform(0, 1, size=(cells + 1, cells + 1, 3))
        grid_img = Image.fromarray(np.uint8(grid * 255), "RGB")
        up = np.asarray(grid_img.resize((size, size), Image.BICUBIC), dtype=np.float64) / 255.0
        img += amp * up
        total += amp
        amp *= 0.5
    img /= total
    img = (img - img.min()) / max(img.max() - img.min(), 1e-9)
    return img * 255.0


TEXTURES: dict[str, Callable] = {
    "sinusoid": sinusoid_texture,
    "checker": checker_texture,
    "noise": value_noise_texture,
}


def procedural_images(n: int, size: int = 64, seed: int = 0, kinds: Sequence[str] = tuple(TEXTURES)) -> list[np.ndarray]:
    """``n`` uint8 RGB textures cycling through ``kinds``."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        img = TEXTURES[kinds[i % len(kinds)]](rng, size)
        out.append(np.clip(np.round(img), 0, 255).astype(np.uint8))
    return out


def list_images(folder: str | Path) -> list[Path]:
    folder = Path(folder)
    if not folder.is_dir():
        raise FileNotFoundError(f"not a directory: {folder}")
    return sorted(p for p in folder.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def load_image(path: str | Path) -> np.ndarray:
    return np.asarray(Image.open(path).convert("RGB"))


def save_png(path: str | Path, img: np.ndarray) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(img, dtype=np.uint8)).save(path, format="PNG")


def random_crops(images: Sequence[np.ndarray], n: int, size: int, seed: int = 0) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    images = [im for im in images if min(im.shape[:2]) >= size]
    if not images:
        raise ValueError(f"no image is at least {size}x{size}")
    crops = []
    for _ in range(n):
        im = images[int(rng.integers(len(images)))]
        y = int(rng.integers(0, im.shape[0] - size + 1))
        x = int(rng.integers(0, im.shape[1] - size + 1))
        crops.append(np.ascontiguousarray(im[y : y + size, x : x + size]))
    return crops


def to_tensor(imgs: Sequence[np.ndarray]) -> torch.Tensor:
    """uint8 (H, W, 3) images -> float32 (B, 3, H, W) in [-1, 1]."""
    arr = np.stack([np.asarray(im) for im in imgs]).astype(np.float32)
    return torch.from_numpy(arr).permute(0, 3, 1, 2).contiguous() / 127.5 - 1.0


def to_uint8(x: torch.Tensor) -> np.ndarray:
    """(B, 3, H, W) tensor in [-1, 1] -> uint8 (B, H, W, 3)."""
    arr = ((x.detach().clamp(-1, 1) + 1.0) * 127.5).round().to(torch.uint8)
    return arr.permute(0, 2, 3, 1).cpu().numpy()


@dataclass
class PairDataset:
    hr: torch.Tensor
    lr: torch.Tensor

    def __post_init__(self):
        if len(self.hr) == 0:
            raise ValueError("empty dataset")
        if len(self.hr) != len(self.lr):
            raise ValueError("HR/LR counts differ")

    def __len__(self):
        return len(self.hr)

    def sample_batch(self, rng: np.random.Generator, batch_size: int) -> tuple[torch.Tensor, torch.Tensor]:
        idx = rng.integers(0, len(self), size=batch_size)
        return self.hr[idx], self.lr[idx]

    @classmethod
    def from_images(
        cls,
        hr_images: Sequence[np.ndarray],
        pipelines: Sequence[DegradationPipeline] | Callable[[int], DegradationPipeline],
    ) -> "PairDataset":
        lrs = []
        for i, im in enumerate(hr_images):
            pipe = pipelines(i) if callable(pipelines) else pipelines[i]
            lrs.append(apply_pipeline(im, pipe))
        return cls(to_tensor(hr_images), to_tensor(lrs))


def training_pairs(
    hr_images: Sequence[np.ndarray],
    seed: int,
    cfg: TrainingDegradationConfig = TrainingDegradationConfig(),
) -> PairDataset:
    """Degrade every HR patch with its own randomly sampled pipeline."""
    seeds = np.random.default_rng(seed).integers(0, 2**31 - 1, size=len(hr_images))
    return PairDataset.from_images(hr_images, lambda i: random_training_pipeline(int(seeds[i]), cfg))
