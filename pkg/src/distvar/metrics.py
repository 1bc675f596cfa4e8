"""PSNR / SSIM on the luminance plane."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

__all__ = ["MetricReport", "luminance", "mse", "psnr", "ssim", "report", "shave"]

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
REC601 = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class MetricReport:
    psnr: float
    ssim: float
    mse: float


def luminance(img: np.ndarray) -> np.ndarray:
    """Rec.601 luma for (H, W, 3) RGB input; 2-D input passes through."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    if img.ndim == 3 and img.shape[2] == 3:
        return img @ np.array(REC601)
    raise ValueError(f"expected a 2-D or (H, W, 3) image, got shape {img.shape}")


def shave(img: np.ndarray, n: int) -> np.ndarray:
    if n <= 0:
        return img
    if 2 * n >= min(img.shape[:2]):
        raise ValueError(f"shave {n} removes the whole {img.shape[:2]} image")
    return img[n:-n, n:-n]


def _pair(a, b):
    a = luminance(a)
    b = luminance(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a, b


def mse(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.mean((a - b) ** 2))


def psnr(a, b, peak: float = 1.0) -> float:
    """10 log10(peak^2 / MSE); +inf for identical inputs."""
    if not peak > 0:
        raise ValueError("peak must be > 0")
    err = mse(a, b)
    if err == 0:
        return math.inf
    return 10.0 * math.log10(peak * peak / err)


def _gaussian_window() -> np.ndarray:
    r = SSIM_WINDOW // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-(x**2) / (2.0 * SSIM_SIGMA**2))
    g /= g.sum()
    return np.outer(g, g)


def _filter_valid(x: np.ndarray, win: np.ndarray) -> np.ndarray:
    r = SSIM_WINDOW // 2
    return ndimage.correlate(x, win, mode="constant")[r:-r, r:-r]


def ssim(a, b, data_range: float = 1.0) -> float:
    """Mean SSIM over all fully-contained 11x11 Gaussian windows (sigma 1.5)."""
    a, b = _pair(a, b)
    if min(a.shape) < SSIM_WINDOW:
        raise ValueError(f"ssim needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {a.shape}")
    win = _gaussian_window()
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mu_a = _filter_valid(a, win)
    mu_b = _filter_valid(b, win)
    var_a = _filter_valid(a * a, win) - mu_a**2
    var_b = _filter_valid(b * b, win) - mu_b**2
    cov = _filter_valid(a * b, win) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def report(a, b, peak: float = 1.0, shave_px: int = 0) -> MetricReport:
    a, b = _pair(a, b)
    a, b = shave(a, shave_px), shave(b, shave_px)
    return MetricReport(psnr(a, b, peak), ssim(a, b), mse(a, b))
