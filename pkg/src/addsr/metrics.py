"""PSNR / SSIM on BT.601 luma, plus a Fourier high-frequency energy proxy."""

from __future__ import annotations

import numpy as np
from scipy import signal

PSNR_CAP = 100.0
_LUMA = np.array([0.299, 0.587, 0.114])


def luminance(img: np.ndarray) -> np.ndarray:
    """BT.601 luma of an RGB image (0-255 scale, float64); grayscale passes through."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    if img.ndim == 3 and img.shape[-1] == 3:
        return img @ _LUMA
    if img.ndim == 3 and img.shape[-1] == 1:
        return img[..., 0]
    raise ValueError(f"expected (H, W) or (H, W, 3) image, got shape {img.shape}")


def _pair(a, b):
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return luminance(a), luminance(b)


def _channels(a, b, space: str):
    """List of (a, b) planes to compare: the luma pair, or every RGB channel pair."""
    if space == "y":
        return [_pair(a, b)]
    if space != "rgb":
        raise ValueError(f"space must be 'y' or 'rgb', got {space!r}")
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        return [(a, b)]
    return [(a[..., c], b[..., c]) for c in range(a.shape[-1])]


def psnr(a: np.ndarray, b: np.ndarray, space: str = "y") -> float:
    """PSNR in dB; identical images return ``PSNR_CAP``.

    ``space="y"`` compares BT.601 luma; ``space="rgb"`` averages the MSE over channels.
    """
    mse = np.mean([np.mean((pa - pb) ** 2) for pa, pb in _channels(a, b, space)])
    if mse == 0:
        return PSNR_CAP
    return float(min(10.0 * np.log10(255.0**2 / mse), PSNR_CAP))


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2
    g = np.exp(-(ax**2) / (2 * sigma**2))
    g /= g.sum()
    return np.outer(g, g)


def ssim(a: np.ndarray, b: np.ndarray, space: str = "y") -> float:
    """Mean single-scale SSIM, 11x11 Gaussian window (sigma 1.5), valid region only.

    With ``space="rgb"`` the per-channel SSIMs are averaged.
    """
    return float(np.mean([_ssim_plane(pa, pb) for pa, pb in _channels(a, b, space)]))


def _ssim_plane(ya: np.ndarray, yb: np.ndarray) -> float:
    if min(ya.shape) < 11:
        raise ValueError(f"image {ya.shape} smaller than the 11x11 SSIM window")
    c1 = (0.01 * 255) ** 2
    c2 = (0.03 * 255) ** 2
    w = _gaussian_window()

    def filt(x):
        return signal.correlate2d(x, w, mode="valid")

    mu_a, mu_b = filt(ya), filt(yb)
    var_a = filt(ya * ya) - mu_a**2
    var_b = filt(yb * yb) - mu_b**2
    cov = filt(ya * yb) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def hf_energy(img: np.ndarray) -> float:
    """Share of non-DC Fourier power at radial frequency above half-Nyquist (0.25 cycles/px)."""
    y = luminance(img)
    y = y - y.mean()
    power = np.abs(np.fft.fft2(y)) ** 2
    total = power.sum()
    if total <= 1e-12 * max(1.0, y.size):
        return 0.0
    fy = np.fft.fftfreq(y.shape[0])[:, None]
    fx = np.fft.fftfreq(y.shape[1])[None, :]
    radius = np.sqrt(fx**2 + fy**2)
    return float(power[radius > 0.25].sum() / total)
