"""Gradient-flow minimization of

    E[u] = 1/2 ||K_D u - u0||^2 + lambda * R_D[u]

Each step is u <- u - tau * (K_D*(K_D u - u0) + lambda * B(u, D)) where B is
either the exact regularizer gradient (``mode="analytic"``, plain gradient
descent) or a fitted kernel bank (``mode="bank"``).  Steps are accepted
under an Armijo sufficient-decrease rule with step halving, so the recorded
energy never increases.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from . import degrade, kernels, spectral
from .degrade import DegradationModel
from .field import upsample_bilinear
from .regularize import (
    RegularizerParams,
    monotonicity_penalty,
    penalty_grid,
    regularizer_gradient,
    regularizer_terms,
    smoothness_penalty,
)

__all__ = [
    "SolverConfig",
    "StepRecord",
    "SolverTrace",
    "SolverState",
    "Energy",
    "energy",
    "energy_gradient",
    "flow_step",
    "initialize",
    "prepare_depth",
    "restore",
    "TrainingPair",
    "CalibrationResult",
    "calibrate",
    "CALIBRATION_COORDS",
]

ARMIJO_C = 1e-4


@dataclass
class SolverConfig:
    iterations: int = 32
    tau0: float = 1.0
    rho: float = 0.5
    max_halvings: int = 30
    lambda_schedule: Sequence[float] | None = None
    mode: str = "analytic"
    stop_tol: float = 1e-7
    init: str = "bilinear"
    consistency_weight: float = 0.05

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if not self.tau0 > 0:
            raise ValueError("tau0 must be > 0")
        if not 0 < self.rho < 1:
            raise ValueError("rho must lie in (0, 1)")
        if self.max_halvings < 0:
            raise ValueError("max_halvings must be >= 0")
        if self.mode not in ("analytic", "bank"):
            raise ValueError(f"mode must be 'analytic' or 'bank', got {self.mode!r}")
        if self.init not in ("bilinear", "wiener"):
            raise ValueError(f"init must be 'bilinear' or 'wiener', got {self.init!r}")
        if self.stop_tol < 0:
            raise ValueError("stop_tol must be >= 0")
        if self.lambda_schedule is not None and any(not v > 0 for v in self.lambda_schedule):
            raise ValueError("lambda_schedule entries must be > 0")

    def lam(self, k: int, params: RegularizerParams) -> float:
        if self.lambda_schedule is None or len(self.lambda_schedule) == 0:
            return params.lam
        sched = self.lambda_schedule
        return float(sched[min(k, len(sched) - 1)])


@dataclass
class StepRecord:
    iteration: int
    energy: float
    data_term: float
    reg_term: float
    tau: float
    el_residual: float
    consistency_residual: float = math.nan
    exhausted: bool = False


@dataclass
class SolverTrace:
    initial_energy: float = math.nan
    initial_el_residual: float = math.nan
    records: list[StepRecord] = field(default_factory=list)

    COLUMNS = ("iteration", "energy", "data_term", "reg_term", "tau", "el_residual", "consistency_residual")

    @property
    def energies(self) -> np.ndarray:
        return np.array([self.initial_energy] + [r.energy for r in self.records])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.COLUMNS)
        for r in self.records:
            writer.writerow([r.iteration] + [repr(float(getattr(r, c))) for c in self.COLUMNS[1:]])
        return buf.getvalue()


class Energy(NamedTuple):
    total: float
    data: float
    reg: float


@dataclass
class SolverState:
    u: np.ndarray
    iteration: int = 0
    tau: float = 1.0
    energy: Energy | None = None
    gradient: np.ndarray | None = None
    trace: SolverTrace = field(default_factory=SolverTrace)
    stopped: bool = False


def _check(u, u0, model, depth_map):
    s = model.scale
    if u.shape != (u0.shape[0] * s, u0.shape[1] * s):
        raise ValueError(f"dimension mismatch: u {u.shape} is not {s}x the observation {u0.shape}")
    if np.shape(depth_map) != u.shape:
        raise ValueError(f"dimension mismatch: depth map {np.shape(depth_map)} vs u {u.shape}")


def energy(u, u0, model: DegradationModel, depth_map, params: RegularizerParams, lam: float | None = None,
           reg_depth=None) -> Energy:
    """Energy split into data and (lambda-weighted) regularizer terms.

    ``reg_depth`` overrides the depth seen by the regularizer only (used by
    the constant-g ablation); the degradation always uses ``depth_map``.
    """
    u = np.asarray(u, dtype=np.float64)
    u0 = np.asarray(u0, dtype=np.float64)
    _check(u, u0, model, depth_map)
    lam = params.lam if lam is None else lam
    r = degrade.apply(model, u, depth_map) - u0
    data = 0.5 * float((r * r).sum())
    reg = lam * sum(regularizer_terms(u, depth_map if reg_depth is None else reg_depth, params))
    return Energy(data + reg, data, reg)


def _data_gradient(u, u0, model, depth_map):
    return degrade.apply_adjoint(model, degrade.apply(model, u, depth_map) - u0, depth_map)


def energy_gradient(u, u0, model: DegradationModel, depth_map, params: RegularizerParams,
                    lam: float | None = None, reg_depth=None) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    u0 = np.asarray(u0, dtype=np.float64)
    _check(u, u0, model, depth_map)
    lam = params.lam if lam is None else lam
    rd = depth_map if reg_depth is None else reg_depth
    return _data_gradient(u, u0, model, depth_map) + lam * regularizer_gradient(u, rd, params)


def flow_step(state: SolverState, u0, model: DegradationModel, depth_map, params: RegularizerParams,
              config: SolverConfig, bank: kernels.KernelBank | None = None, reg_depth=None) -> SolverState:
    """One accepted (or flagged) gradient-flow step; mutates and returns ``state``."""
    lam = config.lam(state.iteration, params)
    rd = depth_map if reg_depth is None else reg_depth
    u = state.u
    if state.energy is None:
        state.energy = energy(u, u0, model, depth_map, params, lam, rd)
    if state.gradient is None:
        state.gradient = energy_gradient(u, u0, model, depth_map, params, lam, rd)
    grad = state.gradient

    if config.mode == "bank":
        if bank is None:
            raise ValueError("bank mode needs a kernel bank")
        direction = _data_gradient(u, u0, model, depth_map) + lam * kernels.apply_bank(bank, u, rd)
    else:
        direction = grad
    dnorm2 = float((direction * direction).sum())
    consistency = float(((grad - direction) ** 2).sum()) if config.mode == "bank" else math.nan

    e_old = state.energy
    state.iteration += 1
    if dnorm2 == 0.0:
        state.trace.records.append(StepRecord(state.iteration, e_old.total, e_old.data, e_old.reg, state.tau,
                                              math.sqrt(float((grad * grad).sum())), consistency))
        state.stopped = True
        return state

    # first step starts at tau0; later steps first try to grow the last accepted step
    tau = state.tau / config.rho if state.iteration > 1 else config.tau0
    accepted = None
    for _ in range(config.max_halvings + 1):
        trial = u - tau * direction
        e_new = energy(trial, u0, model, depth_map, params, lam, rd)
        if e_new.total <= e_old.total - ARMIJO_C * tau * dnorm2:
            accepted = (trial, e_new)
            break
        tau *= config.rho

    if accepted is None:
        state.trace.records.append(StepRecord(state.iteration, e_old.total, e_old.data, e_old.reg, 0.0,
                                              math.sqrt(float((grad * grad).sum())), consistency, exhausted=True))
        state.stopped = True
        return state

    trial, e_new = accepted
    state.u = trial
    state.tau = tau
    state.energy = e_new
    state.gradient = energy_gradient(trial, u0, model, depth_map, params, lam, rd)
    state.trace.records.append(StepRecord(state.iteration, e_new.total, e_new.data, e_new.reg, tau,
                                          math.sqrt(float((state.gradient**2).sum())), consistency))
    drop = e_old.total - e_new.total
    if drop <= config.stop_tol * max(abs(e_old.total), 1e-300):
        state.stopped = True
    return state


def prepare_depth(depth_map, hr_shape, scale: int) -> np.ndarray:
    """Accept an HR depth map, or an LR one (bilinearly upsampled)."""
    depth_map = np.asarray(depth_map, dtype=np.float64)
    if depth_map.shape == tuple(hr_shape):
        return depth_map
    if depth_map.shape == (hr_shape[0] // scale, hr_shape[1] // scale):
        return upsample_bilinear(depth_map, scale)
    raise ValueError(f"depth map shape {depth_map.shape} matches neither HR {tuple(hr_shape)} nor LR grid")


def initialize(u0, model: DegradationModel, depth_map, config: SolverConfig,
               profile: spectral.SpectralProfile | None = None) -> np.ndarray:
    if config.init == "wiener":
        return spectral.wiener_restore(u0, model, depth_map, profile or spectral.SpectralProfile())
    return upsample_bilinear(u0, model.scale)


def _ensure_bank(bank, u, depth_map, params):
    if bank is not None:
        return bank
    fresh = kernels.default_bank(float(depth_map.min()), float(depth_map.max()))
    return kernels.fit_bank_to_analytic(fresh, [u], [depth_map], params).bank


def restore(u0, depth_map, model: DegradationModel, params: RegularizerParams, config: SolverConfig | None = None,
            bank: kernels.KernelBank | None = None, profile: spectral.SpectralProfile | None = None,
            clip: bool = True, reg_depth=None):
    """Run up to ``config.iterations`` flow steps from the interpolated start.

    Returns (image, trace).  Only the returned image is clamped to [0, 1].
    In bank mode without an explicit bank, a default bank is fitted to the
    analytic regularizer gradient at the initial iterate.
    """
    config = config or SolverConfig()
    u0 = np.asarray(u0, dtype=np.float64)
    hr_shape = (u0.shape[0] * model.scale, u0.shape[1] * model.scale)
    depth_map = prepare_depth(depth_map, hr_shape, model.scale)
    rd = depth_map if reg_depth is None else prepare_depth(reg_depth, hr_shape, model.scale)
    u = initialize(u0, model, depth_map, config, profile)
    state = SolverState(u=u, tau=config.tau0)
    lam0 = config.lam(0, params)
    state.energy = energy(u, u0, model, depth_map, params, lam0, rd)
    state.gradient = energy_gradient(u, u0, model, depth_map, params, lam0, rd)
    state.trace.initial_energy = state.energy.total
    state.trace.initial_el_residual = math.sqrt(float((state.gradient**2).sum()))
    if config.mode == "bank" and config.iterations > 0:
        bank = _ensure_bank(bank, u, rd, params)
    for _ in range(config.iterations):
        flow_step(state, u0, model, depth_map, params, config, bank, rd)
        if state.stopped:
            break
    out = np.clip(state.u, 0.0, 1.0) if clip else state.u
    return out, state.trace


# -- calibration ---------------------------------------------------------------

CALIBRATION_COORDS = ("d0", "d1", "gamma0", "gamma1", "sigma_r0", "d_sigma", "lam", "mu")

DEFAULT_BOUNDS = {
    "d0": (0.1, 100.0),
    "d1": (0.1, 100.0),
    "gamma0": (1e-4, 10.0),
    "gamma1": (1e-4, 10.0),
    "sigma_r0": (1e-3, 1.0),
    "d_sigma": (0.1, 100.0),
    "lam": (1e-5, 1.0),
    "mu": (1e-4, 10.0),
    "h_mid": (0.0, 100.0),
    "h_width": (0.1, 50.0),
}
_LINEAR = {"h_mid"}
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class TrainingPair:
    hr: np.ndarray
    lr: np.ndarray
    depth: np.ndarray
    model: DegradationModel


@dataclass
class CalibrationResult:
    params: RegularizerParams
    objective: float
    trace: list[float]
    evaluations: int


def _objective(params, pairs, config, alpha, beta, grid):
    recon = 0.0
    for p in pairs:
        out, _ = restore(p.lr, p.depth, p.model, params, config)
        recon += float(((out - p.hr) ** 2).sum())
    pen = 0.0
    if alpha:
        pen += alpha * monotonicity_penalty(params, grid)
    if beta:
        pen += beta * smoothness_penalty(params, grid)
    return recon + pen


def _golden_search(f, lo, hi, tol, max_evals):
    """Minimize f on [lo, hi]; ties resolve toward lower coordinates."""
    seen = {}

    def ev(x):
        if x not in seen:
            seen[x] = f(x)
        return seen[x]

    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    ev(a), ev(b)
    fc, fd = ev(c), ev(d)
    while b - a > tol and len(seen) < max_evals:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = ev(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = ev(d)
    best = min(seen.items(), key=lambda kv: (kv[1], kv[0]))
    return best[0], best[1], len(seen)


def calibrate(params: RegularizerParams, pairs: Sequence[TrainingPair], depth_grid=None,
              alpha: float = 0.02, beta: float = 0.01, coordinates: Sequence[str] = CALIBRATION_COORDS,
              bounds: dict | None = None, config: SolverConfig | None = None, sweeps: int = 1,
              tol: float = 1e-3, max_evals: int = 40) -> CalibrationResult:
    """Coordinate-wise golden-section search on the restoration objective.

    Objective: sum ||restore(LR) - HR||^2 + alpha * monotonicity + beta * smoothness.
    Positive parameters are searched in log space.  A coordinate move is
    accepted only if the objective does not increase.
    """
    if not pairs:
        raise ValueError("calibration needs at least one training pair")
    config = config or SolverConfig()
    bounds = {**DEFAULT_BOUNDS, **(bounds or {})}
    if depth_grid is None:
        depth_grid = penalty_grid(max(float(np.max(p.depth)) for p in pairs))
    current = replace(params)
    best = _objective(current, pairs, config, alpha, beta, depth_grid)
    trace = [best]
    evals = 1
    for _ in range(sweeps):
        for name in coordinates:
            lo, hi = bounds[name]
            log = name not in _LINEAR
            to_x = (lambda v: math.log(v)) if log else (lambda v: v)
            from_x = (lambda x: math.exp(x)) if log else (lambda x: x)

            def f(x, name=name):
                try:
                    trial = replace(current, **{name: from_x(x)})
                except ValueError:
                    return math.inf
                return _objective(trial, pairs, config, alpha, beta, depth_grid)

            span = to_x(hi) - to_x(lo)
            x, fx, n = _golden_search(f, to_x(lo), to_x(hi), tol * span, max_evals)
            evals += n
            if fx <= best:
                current = replace(current, **{name: from_x(x)})
                best = fx
            trace.append(best)
    return CalibrationResult(current, best, trace, evals)
