"""Rendering quality metrics: PSNR and windowed SSIM on [0, 1] images."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

PSNR_CAP_DB = 100.0
PSNR_CAP_MSE = 1e-10
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


@dataclass(frozen=True)
class PsnrResult:
    db: float
    capped: bool


def psnr(a, b) -> PsnrResult:
    """10 log10(1 / MSE) over all channels at dynamic range 1; identical
    images are capped at 100 dB with the capped flag set."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse < PSNR_CAP_MSE:
        return PsnrResult(PSNR_CAP_DB, True)
    return PsnrResult(float(10.0 * np.log10(1.0 / mse)), False)


def _gaussian_taps(n: int, sigma: float) -> np.ndarray:
    x = np.arange(n) - (n - 1) / 2.0
    g = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    return g / g.sum()


def _blur_valid(img: np.ndarray, taps: np.ndarray) -> np.ndarray:
    r = len(taps) // 2
    out = correlate1d(img, taps, axis=0, mode="constant")
    out = correlate1d(out, taps, axis=1, mode="constant")
    return out[r:-r, r:-r]


def ssim(a, b) -> float:
    """Mean SSIM with an 11x11 Gaussian window (sigma 1.5), valid-region
    convolution, C1 = 0.01^2 and C2 = 0.03^2 at dynamic range 1. Multi-channel
    images average the per-channel means."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a = a[..., None]
        b = b[..., None]
    if min(a.shape[0], a.shape[1]) < SSIM_WINDOW:
        raise ValueError(f"image smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    taps = _gaussian_taps(SSIM_WINDOW, SSIM_SIGMA)
    vals = []
    for c in range(a.shape[2]):
        x = a[..., c]
        y = b[..., c]
        mu_x = _blur_valid(x, taps)
        mu_y = _blur_valid(y, taps)
        sxx = _blur_valid(x * x, taps) - mu_x * mu_x
        syy = _blur_valid(y * y, taps) - mu_y * mu_y
        sxy = _blur_valid(x * y, taps) - mu_x * mu_y
        num = (2.0 * mu_x * mu_y + SSIM_C1) * (2.0 * sxy + SSIM_C2)
        den = (mu_x ** 2 + mu_y ** 2 + SSIM_C1) * (sxx + syy + SSIM_C2)
        vals.append(np.mean(num / den))
    return float(np.mean(vals))
