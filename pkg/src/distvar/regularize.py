"""Depth-adaptive regularizer, its exact gradient, and calibration penalties.

    R[u] = sum_x g(D, |grad u|) |grad u|^2 + mu * sum_x h(D) (lap u)^2
    g(d, s) = exp(-d/d0) * psi(s; sigma(d)) + gamma(d)
    psi(s; sigma) = s^2 / (s^2 + sigma^2)

With q = |grad u|^2 the first integrand is Phi(d, q) = e(d) q^2 / (q + sigma^2)
+ gamma(d) q, which is smooth in q, so the gradient

    dR/du = -div(2 Phi_q grad u) + 2 mu lap(h lap u)

is exact everywhere (no lagged diffusivity, no |grad u| epsilon).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field import VectorField, check_same_shape, divergence, gradient, laplacian

__all__ = [
    "RegularizerParams",
    "psi",
    "g_weight",
    "regularizer_terms",
    "regularizer_value",
    "regularizer_gradient",
    "monotonicity_penalty",
    "monotonicity_penalty_samples",
    "smoothness_penalty",
    "smoothness_penalty_samples",
    "penalty_grid",
]


@dataclass
class RegularizerParams:
    lam: float = 0.005
    mu: float = 0.5
    d0: float = 4.0
    gamma0: float = 0.01
    gamma1: float = 8.0
    d1: float = 10.0
    sigma_r0: float = 0.02
    d_sigma: float = 5.0
    h_mid: float = 12.0
    h_width: float = 3.0

    def __post_init__(self):
        for name in ("lam", "d0", "d1", "sigma_r0", "d_sigma", "h_width"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        for name in ("mu", "gamma0", "gamma1"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be >= 0")
        if not np.isfinite(self.h_mid):
            raise ValueError("h_mid must be finite")

    def near_weight(self, d):
        return np.exp(-np.asarray(d, dtype=np.float64) / self.d0)

    def gamma(self, d):
        return self.gamma0 + self.gamma1 * (1.0 - np.exp(-np.asarray(d, dtype=np.float64) / self.d1))

    def sigma(self, d):
        return self.sigma_r0 * (1.0 + np.asarray(d, dtype=np.float64) / self.d_sigma)

    def h(self, d):
        z = (np.asarray(d, dtype=np.float64) - self.h_mid) / self.h_width
        # 0.5 * (1 + tanh(z/2)) is the logistic without overflow warnings
        return 0.5 * (1.0 + np.tanh(0.5 * z))


def psi(s, sigma_d):
    s2 = np.asarray(s, dtype=np.float64) ** 2
    return s2 / (s2 + np.asarray(sigma_d, dtype=np.float64) ** 2)


def g_weight(d, s, params: RegularizerParams):
    return params.near_weight(d) * psi(s, params.sigma(d)) + params.gamma(d)


def _phi_and_slope(depth_map, q, params: RegularizerParams):
    e = params.near_weight(depth_map)
    sig2 = params.sigma(depth_map) ** 2
    gam = params.gamma(depth_map)
    denom = q + sig2
    phi = e * q * q / denom + gam * q
    slope = e * q * (q + 2.0 * sig2) / denom**2 + gam
    return phi, slope


def regularizer_terms(u: np.ndarray, depth_map: np.ndarray, params: RegularizerParams) -> tuple[float, float]:
    """(first-order sum, mu * second-order sum)."""
    check_same_shape(u, depth_map, names=("u", "depth_map"))
    q = gradient(u).magnitude_sq()
    phi, _ = _phi_and_slope(depth_map, q, params)
    first = float(phi.sum())
    if params.mu == 0:
        return first, 0.0
    lap = laplacian(u)
    return first, params.mu * float((params.h(depth_map) * lap * lap).sum())


def regularizer_value(u: np.ndarray, depth_map: np.ndarray, params: RegularizerParams) -> float:
    first, second = regularizer_terms(u, depth_map, params)
    return first + second


def regularizer_gradient(u: np.ndarray, depth_map: np.ndarray, params: RegularizerParams) -> np.ndarray:
    check_same_shape(u, depth_map, names=("u", "depth_map"))
    gu = gradient(u)
    _, slope = _phi_and_slope(depth_map, gu.magnitude_sq(), params)
    out = -divergence(VectorField(2.0 * slope * gu.x, 2.0 * slope * gu.y))
    if params.mu != 0:
        out += 2.0 * params.mu * laplacian(params.h(depth_map) * laplacian(u))
    return out


def penalty_grid(d_max: float, n: int = 256) -> np.ndarray:
    return np.linspace(0.0, float(d_max), n)


def monotonicity_penalty_samples(gamma_values, depth_grid) -> float:
    """Integral of max(0, -gamma')^2 with per-interval finite-difference slopes."""
    g = np.asarray(gamma_values, dtype=np.float64)
    d = np.asarray(depth_grid, dtype=np.float64)
    if d.ndim != 1 or len(d) < 2 or g.shape != d.shape:
        raise ValueError("monotonicity penalty needs >= 2 grid points matching the samples")
    step = np.diff(d)
    if np.any(step <= 0):
        raise ValueError("depth grid must be strictly increasing")
    slope = np.diff(g) / step
    return float(np.sum(np.maximum(0.0, -slope) ** 2 * step))


def monotonicity_penalty(params: RegularizerParams, depth_grid) -> float:
    return monotonicity_penalty_samples(params.gamma(depth_grid), depth_grid)


def smoothness_penalty_samples(gamma_values, depth_grid) -> float:
    """Integral of (gamma'')^2 from second differences at the interior nodes."""
    g = np.asarray(gamma_values, dtype=np.float64)
    d = np.asarray(depth_grid, dtype=np.float64)
    if d.ndim != 1 or len(d) < 3 or g.shape != d.shape:
        raise ValueError("smoothness penalty needs >= 3 grid points matching the samples")
    step = np.diff(d)
    h = step[0]
    if h <= 0 or not np.allclose(step, h, rtol=1e-9, atol=0):
        raise ValueError("smoothness penalty needs a uniform, increasing depth grid")
    curv = (g[:-2] - 2.0 * g[1:-1] + g[2:]) / h**2
    return float(np.sum(curv**2) * h)


def smoothness_penalty(params: RegularizerParams, depth_grid) -> float:
    return smoothness_penalty_samples(params.gamma(depth_grid), depth_grid)
