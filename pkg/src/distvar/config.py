"""Flat ``key = value`` run configuration.

Every parameter block (atmosphere, regularizer, solver, spectral profile)
maps to unique top-level keys.  Unknown keys are rejected with the line
number, and each value is re-validated by the dataclass that owns it.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .degrade import AtmosphereParams
from .regularize import RegularizerParams
from .solver import CALIBRATION_COORDS, SolverConfig
from .spectral import SpectralProfile

__all__ = ["RunConfig", "ConfigError", "parse_config", "load_config", "format_config", "BLOCK_KEYS"]


class ConfigError(ValueError):
    pass


# key -> (block, field name); "seed" is the only renamed key
_ATMOSPHERE = {f.name: f.name for f in fields(AtmosphereParams) if f.name != "rng_seed"} | {"seed": "rng_seed"}
_REGULARIZER = {f.name: f.name for f in fields(RegularizerParams)}
_SOLVER = {f.name: f.name for f in fields(SolverConfig)}
_SPECTRAL = {f.name: f.name for f in fields(SpectralProfile)}
BLOCK_KEYS = {"atmosphere": _ATMOSPHERE, "regularizer": _REGULARIZER, "solver": _SOLVER, "spectral": _SPECTRAL}


@dataclass
class RunConfig:
    atmosphere: AtmosphereParams = field(default_factory=AtmosphereParams)
    regularizer: RegularizerParams = field(default_factory=RegularizerParams)
    solver: SolverConfig = field(default_factory=SolverConfig)
    spectral: SpectralProfile = field(default_factory=SpectralProfile)
    scale: int = 2
    num_bins: int = 8
    pixel_pitch: float = 1.0
    depth_scale: float = 1.0
    shave: int = 0
    hr: str | None = None
    lr: str | None = None
    depth: str | None = None
    bank_path: str | None = None
    dataset: str | None = None
    out: str = "."
    variants: tuple[str, ...] = ("bilinear", "full", "constant_g")
    synthetic_count: int = 10
    synthetic_size: int = 64
    calib_coords: tuple[str, ...] = CALIBRATION_COORDS
    calib_alpha: float = 0.02
    calib_beta: float = 0.01
    calib_sweeps: int = 1
    calib_max_evals: int = 20

    def __post_init__(self):
        if self.scale not in (2, 4, 8):
            raise ValueError(f"scale must be 2, 4 or 8; got {self.scale}")
        if self.num_bins < 2:
            raise ValueError("num_bins must be >= 2")
        if not self.pixel_pitch > 0:
            raise ValueError("pixel_pitch must be > 0")
        if not self.depth_scale > 0:
            raise ValueError("depth_scale must be > 0")
        if self.shave < 0:
            raise ValueError("shave must be >= 0")
        if self.synthetic_count < 1 or self.synthetic_size < 16:
            raise ValueError("synthetic_count must be >= 1 and synthetic_size >= 16")
        if self.synthetic_size % self.scale:
            raise ValueError(f"synthetic_size must be divisible by scale {self.scale}")
        from .bench import VARIANTS

        for v in self.variants:
            if v not in VARIANTS:
                raise ValueError(f"variants: unknown variant {v!r}; choose from {', '.join(VARIANTS)}")
        for c in self.calib_coords:
            if c not in CALIBRATION_COORDS:
                raise ValueError(f"calib_coords: unknown coordinate {c!r}")
        if self.calib_alpha < 0 or self.calib_beta < 0:
            raise ValueError("calib_alpha and calib_beta must be >= 0")
        if self.calib_sweeps < 1 or self.calib_max_evals < 4:
            raise ValueError("calib_sweeps must be >= 1 and calib_max_evals >= 4")


_TOP = {f.name: f for f in fields(RunConfig) if f.name not in BLOCK_KEYS}


def _convert(text: str, template):
    """Convert ``text`` to the type of ``template`` (a default value)."""
    if isinstance(template, bool):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if isinstance(template, int):
        v = float(text)
        if not v.is_integer():
            raise ValueError(f"expected an integer, got {text!r}")
        return int(v)
    if isinstance(template, float):
        return float(text)
    if isinstance(template, tuple):
        return tuple(p.strip() for p in text.split(",") if p.strip())
    return text


def _block_template(block: str, name: str):
    defaults = {"atmosphere": AtmosphereParams(), "regularizer": RegularizerParams(),
                "solver": SolverConfig(), "spectral": SpectralProfile()}[block]
    value = getattr(defaults, name)
    if value is None:
        return 0.0 if name == "noise_psd" else ""
    return value


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    blocks: dict[str, dict] = {name: {} for name in BLOCK_KEYS}
    top: dict = {}
    lines: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        if key in lines:
            raise ConfigError(f"{source}:{lineno}: duplicate key '{key}' (first set on line {lines[key]})")
        lines[key] = lineno
        owner = next((b for b, keys in BLOCK_KEYS.items() if key in keys), None)
        try:
            if owner is not None:
                name = BLOCK_KEYS[owner][key]
                if value.lower() == "none" and name in ("lambda_schedule", "noise_psd"):
                    conv = None
                elif name == "lambda_schedule":
                    conv = tuple(float(v) for v in value.split(",") if v.strip()) or None
                else:
                    conv = _convert(value, _block_template(owner, name))
                blocks[owner][name] = conv
            elif key in _TOP:
                f = _TOP[key]
                if value.lower() in ("", "none") and f.default is None:
                    conv = None
                else:
                    template = f.default if f.default is not dataclasses.MISSING else f.default_factory()
                    conv = _convert(value, "" if template is None else template)
                top[key] = conv
            else:
                raise ConfigError(f"{source}:{lineno}: unknown key '{key}'")
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: key '{key}': {exc}") from None
    # single-key validation first so the message can point at the offending line
    classes = {"atmosphere": AtmosphereParams, "regularizer": RegularizerParams,
               "solver": SolverConfig, "spectral": SpectralProfile}
    built = {}
    inverse = {b: {v: k for k, v in keys.items()} for b, keys in BLOCK_KEYS.items()}
    for block, values in blocks.items():
        for name, value in values.items():
            key = inverse[block][name]
            try:
                classes[block](**{name: value})
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"{source}:{lines[key]}: key '{key}': {exc}") from None
        try:
            built[block] = classes[block](**values)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{source}: {block} parameters: {exc}") from None
    try:
        return RunConfig(**built, **top)
    except ValueError as exc:
        msg = str(exc)
        key = next((k for k in top if msg.startswith(k)), None)
        where = f"{source}:{lines[key]}" if key else source
        raise ConfigError(f"{where}: {msg}") from None


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path))


def _fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "inf" if math.isinf(value) else repr(value)
    if isinstance(value, (tuple, list)):
        return ",".join(_fmt(v) for v in value)
    return str(value)


def format_config(cfg: RunConfig, keys: list[str] | None = None) -> str:
    """Serialize to ``key = value`` lines that ``parse_config`` reads back exactly."""
    items = []
    for block, mapping in BLOCK_KEYS.items():
        obj = getattr(cfg, block)
        for key, name in mapping.items():
            items.append((key, getattr(obj, name)))
    for key in _TOP:
        items.append((key, getattr(cfg, key)))
    if keys is not None:
        wanted = set(keys)
        items = [kv for kv in items if kv[0] in wanted]
    return "".join(f"{k} = {_fmt(v)}\n" for k, v in items)


def with_overrides(cfg: RunConfig, seed=None, scale=None, mode=None, shave=None, out=None) -> RunConfig:
    """Apply command-line overrides, re-validating the touched blocks."""
    if seed is not None:
        cfg = replace(cfg, atmosphere=replace(cfg.atmosphere, rng_seed=seed))
    if mode is not None:
        cfg = replace(cfg, solver=replace(cfg.solver, mode=mode))
    top = {k: v for k, v in (("scale", scale), ("shave", shave), ("out", out)) if v is not None}
    return replace(cfg, **top) if top else cfg
