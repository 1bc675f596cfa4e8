"""Image and depth-map file I/O through OpenCV.

Images are returned as float64 in [0, 1], either (H, W) or (H, W, 3) RGB.
Output is always 16-bit PNG.  Depth maps come from 16-bit PNG scaled by
``depth_scale`` (meters per unit) or from PFM in meters.
"""

from __future__ import annotations

from pathlib import Path

import cv2
import numpy as np

__all__ = ["read_image", "write_image", "read_depth", "write_depth_pfm", "IMAGE_SUFFIXES"]

IMAGE_SUFFIXES = (".png", ".pgm")


def _imread(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"cannot read {path}: no such file")
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise ValueError(f"cannot decode {path}")
    return raw


def read_image(path) -> np.ndarray:
    raw = _imread(path)
    if raw.dtype == np.uint8:
        img = raw.astype(np.float64) / 255.0
    elif raw.dtype == np.uint16:
        img = raw.astype(np.float64) / 65535.0
    else:
        raise ValueError(f"{path}: unsupported sample type {raw.dtype}; expected 8- or 16-bit")
    if img.ndim == 3:
        if img.shape[2] == 1:
            return img[..., 0]
        # drop alpha, BGR -> RGB
        return np.ascontiguousarray(img[..., 2::-1] if img.shape[2] == 4 else img[..., ::-1])
    return img


def write_image(path, img: np.ndarray) -> None:
    img = np.asarray(img, dtype=np.float64)
    if not np.all(np.isfinite(img)):
        raise ValueError("refusing to write non-finite pixels")
    q = np.round(np.clip(img, 0.0, 1.0) * 65535.0).astype(np.uint16)
    if q.ndim == 3:
        q = np.ascontiguousarray(q[..., ::-1])
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), q):
        raise OSError(f"cannot write {path}")


def read_depth(path, depth_scale: float = 1.0) -> np.ndarray:
    """Depth in meters, validated strictly positive and finite."""
    raw = _imread(path)
    if Path(path).suffix.lower() == ".pfm":
        depth = raw.astype(np.float64)
    elif raw.dtype == np.uint16 or raw.dtype == np.uint8:
        depth = raw.astype(np.float64) * depth_scale
    else:
        raise ValueError(f"{path}: depth must be 16-bit PNG or PFM")
    if depth.ndim == 3:
        raise ValueError(f"{path}: depth map must be single-channel")
    if not np.all(np.isfinite(depth)) or np.any(depth <= 0):
        raise ValueError(f"{path}: depth must be strictly positive and finite")
    return depth


def write_depth_pfm(path, depth: np.ndarray) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), np.asarray(depth, dtype=np.float32)):
        raise OSError(f"cannot write {path}")
