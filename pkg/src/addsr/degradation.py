"""Synthetic HR -> LR degradation: blur, resize, additive Gaussian noise, JPEG.

Images are ``uint8`` arrays of shape ``(H, W, 3)`` (or ``(H, W)``).  Between
stages the image is carried in float32 on the 0-255 scale and clamped.
"""

from __future__ import annotations

import io
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence, Union

import cv2
import numpy as np
from PIL import Image, features
from scipy import ndimage

RESIZE_KERNELS = {
    "bicubic": cv2.INTER_CUBIC,
    "bilinear": cv2.INTER_LINEAR,
    "area": cv2.INTER_AREA,
}


@dataclass(frozen=True)
class Blur:
    sigma: float
    kernel_size: int = 21


@dataclass(frozen=True)
class Resize:
    scale: float
    kernel: str = "bicubic"


@dataclass(frozen=True)
class GaussianNoise:
    sigma: float  # on the 0-255 scale


@dataclass(frozen=True)
class Jpeg:
    quality: int


Stage = Union[Blur, Resize, GaussianNoise, Jpeg]
_STAGE_TYPES = {cls.__name__: cls for cls in (Blur, Resize, GaussianNoise, Jpeg)}


@dataclass(frozen=True)
class DegradationPipeline:
    stages: tuple = ()
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))
        for st in self.stages:
            if not isinstance(st, tuple(_STAGE_TYPES.values())):
                raise TypeError(f"unknown stage {st!r}")

    @property
    def total_scale(self) -> float:
        scale = 1.0
        for st in self.stages:
            if isinstance(st, Resize):
                scale *= st.scale
        return scale

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "stages": [{"type": type(st).__name__, **asdict(st)} for st in self.stages],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "DegradationPipeline":
        stages = []
        for sd in d.get("stages", []):
            sd = dict(sd)
            kind = sd.pop("type")
            if kind not in _STAGE_TYPES:
                raise ValueError(f"unknown stage type {kind!r}")
            stages.append(_STAGE_TYPES[kind](**sd))
        return cls(tuple(stages), int(d.get("seed", 0)))


def codec_versions() -> dict:
    """Versions of the JPEG codec stack, recorded in run metadata."""
    import PIL

    return {"Pillow": PIL.__version__, "libjpeg": features.version("jpg"), "opencv": cv2.__version__}


def gaussian_kernel(sigma: float, kernel_size: int = 21) -> np.ndarray:
    """Normalized, truncated isotropic 2D Gaussian (float64)."""
    if kernel_size % 2 != 1 or kernel_size < 1:
        raise ValueError(f"kernel_size must be a positive odd integer, got {kernel_size}")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    r = kernel_size // 2
    ax = np.arange(-r, r + 1, dtype=np.float64)
    xx, yy = np.meshgrid(ax, ax)
    k = np.exp(-(xx**2 + yy**2) / (2.0 * sigma**2))
    return k / k.sum()


def gaussian_blur(img: np.ndarray, sigma: float, kernel_size: int = 21) -> np.ndarray:
    """Convolve each channel with a truncated Gaussian, reflect padding.

    Returns float64; callers round/clamp as needed.
    """
    k = gaussian_kernel(sigma, kernel_size)
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return ndimage.correlate(img, k, mode="reflect")
    return np.stack(
        [ndimage.correlate(img[..., c], k, mode="reflect") for c in range(img.shape[-1])],
        axis=-1,
    )


def resize(img: np.ndarray, scale: float, kernel: str = "bicubic") -> np.ndarray:
    if kernel not in RESIZE_KERNELS:
        raise ValueError(f"unknown resize kernel {kernel!r}")
    h, w = img.shape[:2]
    out_h, out_w = _scaled_size(h, scale), _scaled_size(w, scale)
    out = cv2.resize(
        np.ascontiguousarray(img, dtype=np.float32), (out_w, out_h), interpolation=RESIZE_KERNELS[kernel]
    )
    return out


def _scaled_size(n: int, scale: float) -> int:
    m = n * scale
    if abs(m - round(m)) > 1e-6 or round(m) < 1:
        raise ValueError(f"dimension {n} not divisible by scale factor {scale}")
    return int(round(m))


def add_gaussian_noise(img: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    img = np.asarray(img, dtype=np.float32)
    return img + rng.normal(0.0, sigma, size=img.shape).astype(np.float32)


def jpeg_roundtrip(img: np.ndarray, quality: int) -> np.ndarray:
    """Baseline JPEG encode/decode through Pillow's libjpeg."""
    if int(quality) != quality or not 1 <= quality <= 100:
        raise ValueError(f"JPEG quality must be an integer in [1, 100], got {quality!r}")
    arr = np.asarray(img)
    if arr.dtype != np.uint8:
        arr = np.clip(np.round(arr), 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="JPEG", quality=int(quality), optimize=False, progressive=False)
    buf.seek(0)
    return np.asarray(Image.open(buf).convert("RGB" if arr.ndim == 3 else "L"))


def _to_uint8(x: np.ndarray) -> np.ndarray:
    return np.clip(np.round(x), 0, 255).astype(np.uint8)


def apply_pipeline(hr: np.ndarray, pipe: DegradationPipeline) -> np.ndarray:
    """Apply the stages in order; output is uint8."""
    hr = np.asarray(hr)
    if hr.dtype != np.uint8:
        raise TypeError(f"expected a uint8 image, got {hr.dtype}")
    total = pipe.total_scale
    h, w = hr.shape[:2]
    _scaled_size(h, total)
    _scaled_size(w, total)
    if not pipe.stages:
        return hr.copy()

    rng = np.random.default_rng(pipe.seed)
    x = hr.astype(np.float32)
    for st in pipe.stages:
        if isinstance(st, Blur):
            x = gaussian_blur(x, st.sigma, st.kernel_size).astype(np.float32)
        elif isinstance(st, Resize):
            x = resize(x, st.scale, st.kernel)
        elif isinstance(st, GaussianNoise):
            x = add_gaussian_noise(x, st.sigma, rng)
        elif isinstance(st, Jpeg):
            x = jpeg_roundtrip(_to_uint8(x), st.quality).astype(np.float32)
        x = np.clip(x, 0.0, 255.0)
    return _to_uint8(x)


FIXED_PIPELINES: dict[str, tuple] = {
    "sr4": (Resize(0.25, "bicubic"),),
    "blur2_sr4": (Blur(2.0), Resize(0.25, "bicubic")),
    "sr4_noise40": (Resize(0.25, "bicubic"), GaussianNoise(40.0)),
    "blur2_sr4_noise20_jpeg50": (Blur(2.0), Resize(0.25, "bicubic"), GaussianNoise(20.0), Jpeg(50)),
}


def fixed_pipeline(name: str, seed: int = 0) -> DegradationPipeline:
    """One of the four named test degradations."""
    try:
        return DegradationPipeline(FIXED_PIPELINES[name], seed)
    except KeyError:
        raise ValueError(f"unknown pipeline {name!r}; choose from {sorted(FIXED_PIPELINES)}") from None


@dataclass(frozen=True)
class TrainingDegradationConfig:
    """Sampling ranges for the randomized training degradation."""

    blur_sigma: tuple[float, float] = (0.2, 3.0)
    noise_sigma: tuple[float, float] = (1.0, 30.0)
    jpeg_quality: tuple[int, int] = (30, 95)
    resize_kernels: tuple[str, ...] = ("bicubic", "bilinear", "area")
    scale: float = 0.25
    order: int = 1
    kernel_size: int = 21

    def __post_init__(self):
        for name in ("blur_sigma", "noise_sigma", "jpeg_quality"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name}: lower bound {lo} exceeds upper bound {hi}")
            object.__setattr__(self, name, (lo, hi))
        if self.blur_sigma[0] <= 0:
            raise ValueError("blur_sigma must be positive")
        if self.noise_sigma[0] < 0:
            raise ValueError("noise_sigma must be non-negative")
        if self.jpeg_quality[0] < 1 or self.jpeg_quality[1] > 100:
            raise ValueError("jpeg_quality must lie within [1, 100]")
        if int(self.jpeg_quality[0]) != self.jpeg_quality[0] or int(self.jpeg_quality[1]) != self.jpeg_quality[1]:
            raise ValueError("jpeg_quality bounds must be integers")
        kernels = tuple(self.resize_kernels)
        if not kernels or any(k not in RESIZE_KERNELS for k in kernels):
            raise ValueError(f"resize_kernels must be a non-empty subset of {sorted(RESIZE_KERNELS)}")
        object.__setattr__(self, "resize_kernels", kernels)
        if not 0 < self.scale <= 1:
            raise ValueError("scale must lie in (0, 1]")
        if self.order not in (1, 2):
            raise ValueError("order must be 1 or 2")

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def random_training_pipeline(rng_seed: int, cfg: TrainingDegradationConfig = TrainingDegradationConfig()) -> DegradationPipeline:
    """Sample a blur/resize/noise/JPEG pipeline uniformly from ``cfg``'s ranges.

    With ``order=2`` two passes are chained, each resizing by ``sqrt(scale)``.
    """
    rng = np.random.default_rng(rng_seed)
    per_pass = cfg.scale ** (1.0 / cfg.order)
    stages: list[Stage] = []
    for _ in range(cfg.order):
        stages.append(Blur(float(rng.uniform(*cfg.blur_sigma)), cfg.kernel_size))
        stages.append(Resize(per_pass, cfg.resize_kernels[int(rng.integers(len(cfg.resize_kernels)))]))
        stages.append(GaussianNoise(float(rng.uniform(*cfg.noise_sigma))))
        lo, hi = cfg.jpeg_quality
        stages.append(Jpeg(int(rng.integers(lo, hi + 1))))
    return DegradationPipeline(tuple(stages), int(rng.integers(2**31 - 1)))
