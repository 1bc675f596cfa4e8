"""Depth-dependent degradation operator and its exact adjoint.

The forward model is

    K_D u = downsample( sum_b m_b * (k_b conv u), s )

with one point-spread function ``k_b`` per depth bin and hat-function
weights ``m_b(x)`` interpolating the local depth between bin centers.
Each PSF is the inverse DFT of the radially symmetric symbol

    sigma(xi, d) = sigma0(xi) * exp(-beta(xi) * d)
    sigma0(xi)   = exp(-(xi * r0)^2 / 2)
    beta(xi)     = beta0 * (8 pi^3 / 3) * xi^4 / lambda^4 * ((n^2 - 1) / (n^2 + 2))^2 * N

i.e. a Gaussian optical transfer function attenuated by homogeneous Rayleigh
scattering along a path of length d.  Convolutions use replicate boundaries;
the adjoint folds the padded border back so that <K u, v> = <u, K* v>
holds to roundoff, not just in the interior.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .field import check_same_shape, downsample, idft2, upsample_adjoint, FrequencyGrid

__all__ = [
    "AtmosphereParams",
    "DegradationModel",
    "scattering_coefficient",
    "symbol_magnitude",
    "bin_centers",
    "bin_weights",
    "build_model",
    "model_from_psfs",
    "apply",
    "apply_adjoint",
    "add_noise",
    "degrade",
    "convolve_replicate",
    "convolve_replicate_adjoint",
]

MAX_KERNEL_RADIUS = 15
PSF_MASS_FRACTION = 0.999
_PSF_GRID = 64
_PSF_OVERSAMPLE = 4


@dataclass
class AtmosphereParams:
    """Sensor response and homogeneous-atmosphere scattering parameters.

    Frequencies are in cycles per meter of the scene plane, so with the
    default pixel pitch of 1.0 they are cycles per pixel and ``r0`` is in
    pixel units.  ``beta0`` is a dimensionless multiplier on the Rayleigh
    cross-section; 0 switches attenuation off.
    """

    r0: float = 4.0
    beta0: float = 1.0
    wavelength: float = 1.0
    refractive_index: float = 1.5
    particle_density: float = 1.0
    noise_sigma: float = 0.01
    rng_seed: int = 0

    def __post_init__(self):
        if not self.r0 >= 0:
            raise ValueError("r0 must be >= 0")
        if not self.beta0 >= 0:
            raise ValueError("beta0 must be >= 0")
        if not self.wavelength > 0:
            raise ValueError("wavelength must be > 0")
        if not self.refractive_index > 1:
            raise ValueError("refractive_index must be > 1")
        if not self.particle_density >= 0:
            raise ValueError("particle_density must be >= 0")
        if not self.noise_sigma >= 0:
            raise ValueError("noise_sigma must be >= 0")


def scattering_coefficient(atm: AtmosphereParams) -> float:
    """C such that beta(xi) = C * xi^4 (per meter, xi in cycles per meter)."""
    n2 = atm.refractive_index**2
    polar = ((n2 - 1.0) / (n2 + 2.0)) ** 2
    return atm.beta0 * (8.0 * math.pi**3 / 3.0) * polar * atm.particle_density / atm.wavelength**4


def symbol_magnitude(xi_mag, d, atm: AtmosphereParams):
    """sigma0(|xi|) * exp(-beta(|xi|) * d); broadcasts over array inputs."""
    xi_mag = np.asarray(xi_mag, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    if np.any(xi_mag < 0) or np.any(d < 0):
        raise ValueError("symbol_magnitude: frequency and depth must be >= 0")
    base = np.exp(-0.5 * (xi_mag * atm.r0) ** 2)
    atten = np.exp(-scattering_coefficient(atm) * xi_mag**4 * d)
    out = base * atten
    return float(out) if out.ndim == 0 else out


@dataclass
class DegradationModel:
    atmosphere: AtmosphereParams
    depth_bins: np.ndarray
    psf_bank: np.ndarray  # (B, k, k)
    scale: int
    kernel_radius: int
    pixel_pitch: float = 1.0
    dc_gains: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.depth_bins = np.asarray(self.depth_bins, dtype=np.float64)
        self.psf_bank = np.asarray(self.psf_bank, dtype=np.float64)
        if self.depth_bins.ndim != 1 or len(self.depth_bins) < 2:
            raise ValueError("need at least 2 depth bins")
        if np.any(np.diff(self.depth_bins) <= 0):
            raise ValueError("depth bins must be strictly increasing")
        if self.psf_bank.shape[0] != len(self.depth_bins):
            raise ValueError("one PSF per depth bin required")
        k = self.psf_bank.shape[1]
        if self.psf_bank.shape[2] != k or k % 2 == 0 or k != 2 * self.kernel_radius + 1:
            raise ValueError(f"PSFs must be square, odd-sized and match kernel_radius; got {self.psf_bank.shape[1:]}")
        if not np.all(np.isfinite(self.psf_bank)):
            raise ValueError("PSF entries must be finite")
        if self.dc_gains is None:
            self.dc_gains = self.psf_bank.sum(axis=(1, 2))

    @property
    def num_bins(self) -> int:
        return len(self.depth_bins)


def bin_centers(depth_map: np.ndarray, num_bins: int) -> np.ndarray:
    """Uniform centers over [min, max] depth.  A constant map gets centers
    starting at its value so all weight lands on the first bin."""
    lo, hi = float(np.min(depth_map)), float(np.max(depth_map))
    if hi <= lo:
        hi = lo * 2.0
    return np.linspace(lo, hi, num_bins)


def bin_weights(depth_map: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Hat weights m_b(x), shape (B, H, W); clamped outside the center range."""
    depth_map = np.asarray(depth_map, dtype=np.float64)
    eye = np.eye(len(centers))
    return np.stack([np.interp(depth_map, centers, eye[b]) for b in range(len(centers))])


def _psf_for_depth(d: float, atm: AtmosphereParams, pixel_pitch: float) -> np.ndarray:
    """Continuous PSF sampled at pixel centers, (_PSF_GRID, _PSF_GRID), centered.

    The symbol is evaluated on an oversampled frequency grid so the samples
    carry the aliased spectrum rather than a symbol truncated at Nyquist
    (which rings).
    """
    n = _PSF_GRID * _PSF_OVERSAMPLE
    grid = FrequencyGrid(n, n, pixel_pitch / _PSF_OVERSAMPLE)
    sym = symbol_magnitude(grid.radial(), d, atm)
    fine = np.fft.fftshift(idft2(sym))
    c = n // 2
    half = _PSF_GRID // 2
    idx = c + _PSF_OVERSAMPLE * np.arange(-half, half)
    return fine[np.ix_(idx, idx)]


def _mass_radius(ker: np.ndarray) -> int:
    c = ker.shape[0] // 2
    total = np.abs(ker).sum()
    for r in range(0, MAX_KERNEL_RADIUS + 1):
        if np.abs(ker[c - r : c + r + 1, c - r : c + r + 1]).sum() >= PSF_MASS_FRACTION * total:
            return r
    return MAX_KERNEL_RADIUS


def build_model(
    atm: AtmosphereParams,
    depth_map: np.ndarray,
    num_bins: int = 8,
    scale: int = 2,
    pixel_pitch: float = 1.0,
) -> DegradationModel:
    depth_map = np.asarray(depth_map, dtype=np.float64)
    if np.any(~np.isfinite(depth_map)) or np.any(depth_map <= 0):
        raise ValueError("depth map must be strictly positive and finite")
    if num_bins < 2:
        raise ValueError("num_bins must be >= 2")
    if scale not in (1, 2, 4, 8):
        raise ValueError(f"scale must be one of 2, 4, 8; got {scale}")
    centers = bin_centers(depth_map, num_bins)
    full = [_psf_for_depth(d, atm, pixel_pitch) for d in centers]
    radius = max(_mass_radius(k) for k in full)
    c = _PSF_GRID // 2
    bank = []
    for d, ker in zip(centers, full):
        ker = ker[c - radius : c + radius + 1, c - radius : c + radius + 1].copy()
        dc = symbol_magnitude(0.0, d, atm)
        ker *= dc / ker.sum()
        bank.append(ker)
    return DegradationModel(atm, centers, np.stack(bank), scale, radius, pixel_pitch)


def model_from_psfs(psfs, depth_bins, scale: int, atm: AtmosphereParams | None = None) -> DegradationModel:
    """Wrap an explicit PSF stack (tests, custom optics)."""
    psfs = np.asarray(psfs, dtype=np.float64)
    return DegradationModel(atm or AtmosphereParams(), depth_bins, psfs, scale, psfs.shape[1] // 2)


def convolve_replicate(u: np.ndarray, k: np.ndarray) -> np.ndarray:
    r = k.shape[0] // 2
    if r == 0:
        return u * k[0, 0]
    return signal.convolve(np.pad(u, r, mode="edge"), k, mode="valid")


def _fold_edges(z: np.ndarray, r: int) -> np.ndarray:
    # Transpose of np.pad(..., r, mode="edge").
    out = z[r:-r, :].copy()
    out[0] += z[:r].sum(axis=0)
    out[-1] += z[-r:].sum(axis=0)
    res = out[:, r:-r].copy()
    res[:, 0] += out[:, :r].sum(axis=1)
    res[:, -1] += out[:, -r:].sum(axis=1)
    return res


def convolve_replicate_adjoint(v: np.ndarray, k: np.ndarray) -> np.ndarray:
    r = k.shape[0] // 2
    if r == 0:
        return v * k[0, 0]
    return _fold_edges(signal.convolve(v, k[::-1, ::-1], mode="full"), r)


def _check_inputs(model: DegradationModel, hr_shape, depth_map):
    depth_map = np.asarray(depth_map, dtype=np.float64)
    if depth_map.shape != tuple(hr_shape):
        raise ValueError(f"dimension mismatch: image {tuple(hr_shape)} vs depth map {depth_map.shape}")
    h, w = hr_shape
    if h % model.scale or w % model.scale:
        raise ValueError(f"height and width must be divisible by scale {model.scale}; got {h}x{w}")
    return depth_map


def apply(model: DegradationModel, u: np.ndarray, depth_map: np.ndarray) -> np.ndarray:
    """K_D u (noise-free)."""
    u = np.asarray(u, dtype=np.float64)
    depth_map = _check_inputs(model, u.shape, depth_map)
    weights = bin_weights(depth_map, model.depth_bins)
    blurred = np.zeros_like(u)
    for m, k in zip(weights, model.psf_bank):
        if not m.any():
            continue
        blurred += m * convolve_replicate(u, k)
    return downsample(blurred, model.scale)


def apply_adjoint(model: DegradationModel, v: np.ndarray, depth_map: np.ndarray) -> np.ndarray:
    """K_D* v, mapping the low-resolution grid back to the high-resolution one."""
    v = np.asarray(v, dtype=np.float64)
    s = model.scale
    hr_shape = (v.shape[0] * s, v.shape[1] * s)
    depth_map = _check_inputs(model, hr_shape, depth_map)
    weights = bin_weights(depth_map, model.depth_bins)
    up = upsample_adjoint(v, s)
    out = np.zeros(hr_shape)
    for m, k in zip(weights, model.psf_bank):
        if not m.any():
            continue
        out += convolve_replicate_adjoint(m * up, k)
    return out


def add_noise(u: np.ndarray, noise_sigma: float, rng_seed: int) -> np.ndarray:
    """Additive i.i.d. Gaussian noise; no clipping so the model stays affine."""
    u = np.asarray(u, dtype=np.float64)
    if noise_sigma == 0:
        return u.copy()
    rng = np.random.default_rng(rng_seed)
    return u + noise_sigma * rng.standard_normal(u.shape)


def degrade(model: DegradationModel, u: np.ndarray, depth_map: np.ndarray) -> np.ndarray:
    """Full synthetic observation K_D u + noise, noise seeded from the model."""
    atm = model.atmosphere
    return add_noise(apply(model, u, depth_map), atm.noise_sigma, atm.rng_seed)
