"""Depth-conditional kernel bank B(u, D) = sum_i w_i(D) * F_i(u).

Kernels live at M depth anchors and are linearly interpolated in between.
``project_lipschitz`` keeps consecutive anchors within ``L * delta_d`` of each
other per feature, which bounds the slope of the interpolant everywhere.

Application is anchor-binned: each anchor's kernels are applied to the whole
image and the responses are blended with hat weights.  By linearity that is
identical to interpolating a kernel per pixel.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import signal

from .field import check_same_shape, gradient, laplacian

__all__ = [
    "FEATURES",
    "KernelBank",
    "FitResult",
    "DepthClampWarning",
    "default_bank",
    "feature_maps",
    "interpolate_kernels",
    "project_lipschitz",
    "lipschitz_violation",
    "apply_bank",
    "fit_bank",
    "fit_bank_to_analytic",
    "save_bank",
    "load_bank",
]

FEATURES = ("identity", "grad_x", "grad_y", "laplacian")
_MAGIC = b"DKB1"
_HEADER = struct.Struct("<4sIIId")


class DepthClampWarning(UserWarning):
    pass


def _feature(name: str, u: np.ndarray) -> np.ndarray:
    if name == "identity":
        return np.asarray(u, dtype=np.float64)
    if name == "grad_x":
        return gradient(u).x
    if name == "grad_y":
        return gradient(u).y
    if name == "laplacian":
        return laplacian(u)
    raise ValueError(f"unknown feature {name!r}")


@dataclass
class KernelBank:
    anchors: np.ndarray  # (M,)
    weights: np.ndarray  # (M, N, k, k)
    lipschitz_L: float = 1.0
    features: tuple[str, ...] = FEATURES
    residual: float | None = field(default=None, compare=False)

    def __post_init__(self):
        self.anchors = np.asarray(self.anchors, dtype=np.float64)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.anchors.ndim != 1 or len(self.anchors) < 1:
            raise ValueError("kernel bank needs at least one anchor")
        if np.any(np.diff(self.anchors) <= 0):
            raise ValueError("anchors must be strictly increasing")
        m, n, k, k2 = self.weights.shape
        if m != len(self.anchors) or n != len(self.features) or k != k2 or k % 2 == 0:
            raise ValueError(f"weights shape {self.weights.shape} inconsistent with {len(self.anchors)} anchors, "
                             f"{len(self.features)} features, odd square kernels")
        if not self.lipschitz_L > 0:
            raise ValueError("lipschitz_L must be > 0")
        for name in self.features:
            if name not in FEATURES:
                raise ValueError(f"unknown feature {name!r}")

    @property
    def kernel_size(self) -> int:
        return self.weights.shape[-1]

    def copy(self) -> "KernelBank":
        return replace(self, anchors=self.anchors.copy(), weights=self.weights.copy())


@dataclass
class FitResult:
    bank: KernelBank
    residuals: list[float]
    initial_residual: float


def default_bank(d_min: float, d_max: float, num_anchors: int = 8, kernel_size: int = 5,
                 lipschitz_L: float = 1.0) -> KernelBank:
    """Zero kernels on anchors spread uniformly over [d_min, d_max]."""
    if d_max <= d_min:
        d_max = d_min + 1.0
    anchors = np.linspace(d_min, d_max, num_anchors)
    weights = np.zeros((num_anchors, len(FEATURES), kernel_size, kernel_size))
    return KernelBank(anchors, weights, lipschitz_L)


def feature_maps(bank: KernelBank, u: np.ndarray) -> list[np.ndarray]:
    return [_feature(name, u) for name in bank.features]


def _hat_weights(depth_map: np.ndarray, anchors: np.ndarray) -> np.ndarray:
    if len(anchors) == 1:
        return np.ones((1,) + np.shape(depth_map))
    eye = np.eye(len(anchors))
    return np.stack([np.interp(depth_map, anchors, eye[m]) for m in range(len(anchors))])


def interpolate_kernels(bank: KernelBank, d: float) -> np.ndarray:
    """Kernels (N, k, k) at depth d; clamps to the end anchors with a warning."""
    a = bank.anchors
    if d < a[0] or d > a[-1]:
        warnings.warn(f"depth {d} outside anchor range [{a[0]}, {a[-1]}]; clamped", DepthClampWarning, stacklevel=2)
        d = min(max(d, a[0]), a[-1])
    if len(a) == 1:
        return bank.weights[0].copy()
    j = int(np.searchsorted(a, d, side="right")) - 1
    j = min(max(j, 0), len(a) - 2)
    t = (d - a[j]) / (a[j + 1] - a[j])
    if t == 0.0:
        return bank.weights[j].copy()
    if t == 1.0:
        return bank.weights[j + 1].copy()
    return (1.0 - t) * bank.weights[j] + t * bank.weights[j + 1]


def lipschitz_violation(bank: KernelBank) -> float:
    """max over features and consecutive anchors of ||dw|| - L * delta_d."""
    if len(bank.anchors) < 2:
        return -np.inf
    dw = np.diff(bank.weights, axis=0)
    norms = np.sqrt((dw**2).sum(axis=(2, 3)))
    bounds = bank.lipschitz_L * np.diff(bank.anchors)[:, None]
    return float((norms - bounds).max())


def project_lipschitz(bank: KernelBank) -> KernelBank:
    """Sweep anchors in order, shrinking each violating step to length L * delta_d."""
    out = bank.copy()
    w = out.weights
    for m in range(len(out.anchors) - 1):
        bound = out.lipschitz_L * (out.anchors[m + 1] - out.anchors[m])
        for i in range(w.shape[1]):
            diff = w[m + 1, i] - w[m, i]
            norm = float(np.sqrt((diff**2).sum()))
            # tolerance absorbs the rounding of the rescaled step so a second pass is a no-op
            if norm > bound * (1.0 + 1e-12) + 1e-14:
                w[m + 1, i] = w[m, i] + diff * (bound / norm)
    return out


def _pad(f: np.ndarray, r: int) -> np.ndarray:
    return np.pad(f, r, mode="edge") if r else f


def apply_bank(bank: KernelBank, u: np.ndarray, depth_map: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    check_same_shape(u, depth_map, names=("u", "depth_map"))
    r = bank.kernel_size // 2
    feats = [_pad(f, r) for f in feature_maps(bank, u)]
    hats = _hat_weights(np.asarray(depth_map, dtype=np.float64), bank.anchors)
    out = np.zeros_like(u)
    for m, hat in enumerate(hats):
        if not hat.any():
            continue
        resp = np.zeros_like(u)
        for i, fp in enumerate(feats):
            w = bank.weights[m, i]
            if w.any():
                resp += signal.correlate(fp, w, mode="valid")
        out += hat * resp
    return out


def _design_matrix(bank: KernelBank, u: np.ndarray, depth_map: np.ndarray) -> np.ndarray:
    """Columns map vec(weights) -> vec(apply_bank(u)); shape (H*W, M*N*k*k)."""
    k = bank.kernel_size
    r = k // 2
    h, w = u.shape
    hats = _hat_weights(depth_map, bank.anchors).reshape(len(bank.anchors), -1)
    blocks = []
    for f in feature_maps(bank, u):
        patches = np.lib.stride_tricks.sliding_window_view(_pad(f, r), (k, k))
        blocks.append(patches.reshape(h * w, k * k))
    cols = [hats[m][:, None] * blocks[i] for m in range(len(bank.anchors)) for i in range(len(blocks))]
    return np.hstack(cols)


def fit_bank(
    bank: KernelBank,
    fields: list[np.ndarray],
    depth_maps: list[np.ndarray],
    targets: list[np.ndarray],
    iterations: int = 500,
    step: float | None = None,
) -> FitResult:
    """Least-squares fit of kernel entries so apply_bank(u) tracks ``targets``.

    Fixed-step projected gradient descent on sum ||apply_bank(u) - t||^2.  A
    step whose projected result raises the residual is rejected and the step
    halved, so the residual trace never increases.
    """
    if not fields:
        raise ValueError("need at least one sample field")
    if not (len(fields) == len(depth_maps) == len(targets)):
        raise ValueError("fields, depth_maps and targets must have equal length")
    n = bank.weights.size
    gram = np.zeros((n, n))
    rhs = np.zeros(n)
    tt = 0.0
    for u, dmap, t in zip(fields, depth_maps, targets):
        u = np.asarray(u, dtype=np.float64)
        check_same_shape(u, dmap, t, names=("u", "depth_map", "target"))
        x = _design_matrix(bank, u, np.asarray(dmap, dtype=np.float64))
        tv = np.ravel(t)
        gram += x.T @ x
        rhs += x.T @ tv
        tt += float(tv @ tv)

    def residual(wv):
        return max(float(wv @ gram @ wv - 2.0 * rhs @ wv + tt), 0.0)

    if step is None:
        top = float(np.linalg.eigvalsh(gram)[-1])
        step = 0.5 / top if top > 0 else 1.0

    cur = project_lipschitz(bank)
    wv = cur.weights.ravel().copy()
    res = residual(wv)
    initial = res
    history = [res]
    for _ in range(iterations):
        grad = 2.0 * (gram @ wv - rhs)
        trial = replace(cur, weights=(wv - step * grad).reshape(cur.weights.shape))
        trial = project_lipschitz(trial)
        tv = trial.weights.ravel()
        new = residual(tv)
        if new <= res:
            cur, wv, res = trial, tv.copy(), new
        else:
            step *= 0.5
        history.append(res)
        if res == 0.0:
            break
    cur.residual = res
    return FitResult(cur, history, initial)


def fit_bank_to_analytic(bank: KernelBank, fields, depth_maps, params, iterations: int = 500,
                         step: float | None = None) -> FitResult:
    """Fit the bank to the exact regularizer gradient on the given samples."""
    from .regularize import regularizer_gradient

    targets = [regularizer_gradient(u, d, params) for u, d in zip(fields, depth_maps)]
    return fit_bank(bank, fields, depth_maps, targets, iterations, step)


def save_bank(path, bank: KernelBank) -> None:
    m, n, k, _ = bank.weights.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, m, n, k, float(bank.lipschitz_L)))
        fh.write(bank.anchors.astype("<f8").tobytes())
        fh.write(bank.weights.astype("<f8").tobytes())


def load_bank(path) -> KernelBank:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated kernel bank header")
    magic, m, n, k, lip = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}, expected {_MAGIC!r}")
    if n > len(FEATURES):
        raise ValueError(f"{path}: {n} features, at most {len(FEATURES)} supported")
    expect = _HEADER.size + 8 * (m + m * n * k * k)
    if len(raw) != expect:
        raise ValueError(f"{path}: expected {expect} bytes, found {len(raw)}")
    off = _HEADER.size
    anchors = np.frombuffer(raw, "<f8", m, off).astype(np.float64)
    weights = np.frombuffer(raw, "<f8", m * n * k * k, off + 8 * m).astype(np.float64).reshape(m, n, k, k)
    return KernelBank(anchors, weights, lip, FEATURES[:n])
