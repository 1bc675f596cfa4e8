"""Procedural depth-variant test scenes (two-plane and staircase).

Scenes are near-sharp and far-hazy: the high-resolution image itself loses
contrast toward an airlight value and fine detail with distance, as a real
outdoor scene would before any sensor degradation is applied.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import degrade
from .degrade import AtmosphereParams

__all__ = ["Scene", "texture", "apply_haze", "two_plane", "staircase", "make_scene", "scene_suite", "synthesize_pair"]

NEAR_DEPTH = 2.0
FAR_DEPTH = 20.0
AIRLIGHT = 0.7
HAZE_DEPTH = 30.0  # transmission exp(-d / HAZE_DEPTH)
DETAIL_LOSS = 0.03  # Gaussian detail-loss width per unit depth, in pixels


@dataclass
class Scene:
    name: str
    hr: np.ndarray
    depth: np.ndarray


def texture(rng: np.random.Generator, size: int) -> np.ndarray:
    """Piecewise-constant shapes over a smooth shaded background plus fine
    stripes, in roughly [0.05, 0.95]."""
    yy, xx = np.mgrid[0:size, 0:size] / size
    img = 0.5 + 0.15 * ndimage.gaussian_filter(rng.standard_normal((size, size)), size / 8) * (size / 8)
    for _ in range(rng.integers(6, 12)):
        val = rng.uniform(0.1, 0.9)
        if rng.random() < 0.5:
            x0, y0 = rng.uniform(0, 0.8, 2)
            w, h = rng.uniform(0.08, 0.35, 2)
            mask = (xx >= x0) & (xx < x0 + w) & (yy >= y0) & (yy < y0 + h)
        else:
            cx, cy = rng.uniform(0.1, 0.9, 2)
            rad = rng.uniform(0.04, 0.18)
            mask = (xx - cx) ** 2 + (yy - cy) ** 2 < rad**2
        img[mask] = val
    freq = rng.uniform(4, 12)
    theta = rng.uniform(0, np.pi)
    img += 0.06 * np.sin(2 * np.pi * freq * (np.cos(theta) * xx + np.sin(theta) * yy))
    return np.clip(img, 0.05, 0.95)


def apply_haze(img: np.ndarray, depth: np.ndarray) -> np.ndarray:
    """Depth-dependent airlight blend and detail loss, per distinct depth level."""
    out = np.empty_like(img)
    for d in np.unique(depth):
        mask = depth == d
        soft = ndimage.gaussian_filter(img, DETAIL_LOSS * d, mode="nearest")
        t = np.exp(-d / HAZE_DEPTH)
        out[mask] = (t * soft + (1.0 - t) * AIRLIGHT)[mask]
    return out


def two_plane(seed: int, size: int = 64, near: float = NEAR_DEPTH, far: float = FAR_DEPTH) -> Scene:
    """Near plane below a random slanted horizon, far plane above it."""
    rng = np.random.default_rng(seed)
    hr = texture(rng, size)
    yy, xx = np.mgrid[0:size, 0:size] / size
    level = rng.uniform(0.35, 0.65)
    slope = rng.uniform(-0.3, 0.3)
    depth = np.where(yy > level + slope * (xx - 0.5), near, far).astype(np.float64)
    return Scene(f"two_plane_{seed}", apply_haze(hr, depth), depth)


def staircase(seed: int, size: int = 64, near: float = NEAR_DEPTH, far: float = FAR_DEPTH, steps: int = 4) -> Scene:
    """Depth increasing in equal steps from the left edge to the right."""
    rng = np.random.default_rng(seed)
    hr = texture(rng, size)
    levels = np.linspace(near, far, steps)
    idx = np.minimum((np.arange(size) * steps) // size, steps - 1)
    depth = np.tile(levels[idx], (size, 1))
    return Scene(f"staircase_{seed}", apply_haze(hr, depth), depth)


def make_scene(kind: str, seed: int, size: int = 64) -> Scene:
    if kind == "two_plane":
        return two_plane(seed, size)
    if kind == "staircase":
        return staircase(seed, size)
    raise ValueError(f"unknown scene kind {kind!r}")


def scene_suite(count: int = 10, size: int = 64, seed: int = 0) -> list[Scene]:
    """Alternating two-plane / staircase scenes with consecutive seeds."""
    kinds = ("two_plane", "staircase")
    return [make_scene(kinds[i % 2], seed + i, size) for i in range(count)]


def synthesize_pair(scene: Scene, atm: AtmosphereParams, scale: int, num_bins: int = 8):
    """(model, LR observation) for a scene under the given atmosphere."""
    model = degrade.build_model(atm, scene.depth, num_bins, scale)
    lr = degrade.degrade(model, scene.hr, scene.depth)
    return model, lr
