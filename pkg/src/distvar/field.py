"""Grid container and the discrete differential / spectral primitives.

Images and depth maps are plain 2-D float64 numpy arrays indexed ``[y, x]``.
:class:`ScalarField` only exists where the physical pixel pitch matters
(frequency grids, file I/O); every operator here takes and returns arrays.

Boundary convention is replicate (Neumann) everywhere.  ``gradient`` uses
forward differences and ``divergence`` the matching backward differences, so
``<grad u, v> = -<u, div v>`` holds to roundoff.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft
from scipy import ndimage

__all__ = [
    "ScalarField",
    "VectorField",
    "FrequencyGrid",
    "gradient",
    "divergence",
    "laplacian",
    "dft2",
    "idft2",
    "downsample",
    "upsample_adjoint",
    "upsample_bilinear",
    "inner",
    "check_same_shape",
]


@dataclass
class ScalarField:
    """2-D real samples with a physical pixel pitch (meters per pixel)."""

    data: np.ndarray
    pixel_pitch: float = 1.0

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2 or min(self.data.shape) < 1:
            raise ValueError(f"ScalarField needs a non-empty 2-D array, got shape {self.data.shape}")
        if not self.pixel_pitch > 0:
            raise ValueError("pixel_pitch must be > 0")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("ScalarField samples must be finite")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def frequency_grid(self) -> "FrequencyGrid":
        return FrequencyGrid(self.width, self.height, self.pixel_pitch)


@dataclass
class VectorField:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        if self.x.shape != self.y.shape:
            raise ValueError(f"component shapes differ: {self.x.shape} vs {self.y.shape}")

    def magnitude_sq(self) -> np.ndarray:
        return self.x**2 + self.y**2

    def magnitude(self) -> np.ndarray:
        return np.sqrt(self.magnitude_sq())


@dataclass(frozen=True)
class FrequencyGrid:
    """DFT-ordered frequency axes in cycles per meter."""

    width: int
    height: int
    pixel_pitch: float = 1.0

    @property
    def fx(self) -> np.ndarray:
        return np.fft.fftfreq(self.width, d=self.pixel_pitch)

    @property
    def fy(self) -> np.ndarray:
        return np.fft.fftfreq(self.height, d=self.pixel_pitch)

    def radial(self) -> np.ndarray:
        """|xi| per bin, shape (height, width); bin (0, 0) is DC."""
        return np.hypot(self.fy[:, None], self.fx[None, :])


def check_same_shape(*arrays: np.ndarray, names: tuple[str, ...] | None = None) -> None:
    shapes = [np.shape(a) for a in arrays]
    if any(s != shapes[0] for s in shapes):
        label = ", ".join(names) if names else "inputs"
        raise ValueError(f"dimension mismatch between {label}: {shapes}")


def inner(a: np.ndarray, b: np.ndarray) -> float:
    """Discrete L2 inner product (sum over pixels)."""
    return float(np.vdot(np.ravel(a), np.ravel(b)).real)


def gradient(u: np.ndarray) -> VectorField:
    """Forward differences; the last column (x) / last row (y) is zero."""
    u = np.asarray(u, dtype=np.float64)
    gx = np.zeros_like(u)
    gy = np.zeros_like(u)
    gx[:, :-1] = u[:, 1:] - u[:, :-1]
    gy[:-1, :] = u[1:, :] - u[:-1, :]
    return VectorField(gx, gy)


def _backward_diff(p: np.ndarray, axis: int) -> np.ndarray:
    # Negative adjoint of the forward difference whose last entry is zero.
    p = np.moveaxis(p, axis, 0)
    out = np.empty_like(p)
    n = p.shape[0]
    if n == 1:
        out[:] = 0.0
    else:
        out[0] = p[0]
        out[1:-1] = p[1:-1] - p[:-2]
        out[-1] = -p[-2]
    return np.moveaxis(out, 0, axis)


def divergence(v: VectorField) -> np.ndarray:
    return _backward_diff(v.x, axis=1) + _backward_diff(v.y, axis=0)


def laplacian(u: np.ndarray) -> np.ndarray:
    """div(grad u): symmetric, negative semidefinite, 5-point in the interior."""
    return divergence(gradient(u))


def dft2(u: np.ndarray) -> np.ndarray:
    """Unitary 2-D DFT."""
    return sfft.fft2(u, norm="ortho", workers=1)


def idft2(U: np.ndarray, real: bool = True) -> np.ndarray:
    out = sfft.ifft2(U, norm="ortho", workers=1)
    return out.real if real else out


def _check_scale(shape: tuple[int, ...], s: int) -> None:
    if int(s) != s or s < 1:
        raise ValueError(f"scale must be a positive integer, got {s}")
    h, w = shape
    if h % s or w % s:
        raise ValueError(f"height and width must be divisible by scale {s}; got {h}x{w}")


def downsample(u: np.ndarray, s: int) -> np.ndarray:
    """s x s block average."""
    u = np.asarray(u, dtype=np.float64)
    _check_scale(u.shape, s)
    if s == 1:
        return u.copy()
    h, w = u.shape
    return u.reshape(h // s, s, w // s, s).mean(axis=(1, 3))


def upsample_adjoint(v: np.ndarray, s: int) -> np.ndarray:
    """Exact adjoint of :func:`downsample`: replicate into blocks, scaled by 1/s^2."""
    v = np.asarray(v, dtype=np.float64)
    if s == 1:
        return v.copy()
    return np.kron(v, np.full((s, s), 1.0 / (s * s)))


def upsample_bilinear(v: np.ndarray, s: int) -> np.ndarray:
    """Bilinear interpolation onto the s-times finer grid, pixel centers aligned
    with the block-average sampling model (replicate beyond the border)."""
    v = np.asarray(v, dtype=np.float64)
    if s == 1:
        return v.copy()
    h, w = v.shape
    ys = (np.arange(h * s) + 0.5) / s - 0.5
    xs = (np.arange(w * s) + 0.5) / s - 0.5
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return ndimage.map_coordinates(v, [yy, xx], order=1, mode="nearest")
