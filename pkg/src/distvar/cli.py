"""Command-line interface.

    distvar degrade|restore|analyze|bench|calibrate --config <path>
            [--seed N] [--scale 2|4|8] [--mode analytic|bank] [--shave N] [--out <dir>]

Every command reads a flat ``key = value`` config (see ``distvar.config``);
flags override the matching keys.  Exit status is 0 on success and 2 on
any input or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import bench, degrade, imageio, kernels, metrics, solver, spectral
from .config import BLOCK_KEYS, ConfigError, RunConfig, format_config, load_config, with_overrides
from .field import FrequencyGrid

__all__ = ["main", "cmd_degrade", "cmd_restore", "cmd_analyze", "cmd_bench", "cmd_calibrate"]


def _require(cfg: RunConfig, key: str) -> Path:
    value = getattr(cfg, key)
    if not value:
        raise ConfigError(f"missing required key '{key}'")
    return Path(value)


def _hr_depth(cfg: RunConfig, hr_shape) -> np.ndarray:
    depth = imageio.read_depth(_require(cfg, "depth"), cfg.depth_scale)
    return solver.prepare_depth(depth, hr_shape, cfg.scale)


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def cmd_degrade(cfg: RunConfig) -> dict:
    """HR image + depth -> LR image and a re-runnable manifest."""
    hr_path = _require(cfg, "hr")
    hr = imageio.read_image(hr_path)
    h, w = hr.shape[:2]
    if h % cfg.scale or w % cfg.scale:
        raise ValueError(f"HR size {h}x{w} must be divisible by scale {cfg.scale}")
    depth = imageio.read_depth(_require(cfg, "depth"), cfg.depth_scale)
    if depth.shape != (h, w):
        raise ValueError(f"dimension mismatch: image {(h, w)} vs depth map {depth.shape}")
    model = degrade.build_model(cfg.atmosphere, depth, cfg.num_bins, cfg.scale, cfg.pixel_pitch)
    lr = bench.degrade_image(model, hr, depth, cfg.atmosphere.rng_seed)
    out = Path(cfg.out)
    lr_path = out / "lr.png"
    imageio.write_image(lr_path, lr)
    manifest = replace(cfg, hr=str(hr_path.resolve()), depth=str(Path(cfg.depth).resolve()), out=str(out.resolve()))
    _write_text(out / "manifest.txt", "# distvar degrade manifest; rerun with: distvar degrade --config <this file>\n"
                + format_config(manifest))
    return {"lr": lr_path, "manifest": out / "manifest.txt"}


def cmd_restore(cfg: RunConfig) -> dict:
    """LR image + depth -> SR image and per-channel solver traces."""
    lr = imageio.read_image(_require(cfg, "lr"))
    hr_shape = (lr.shape[0] * cfg.scale, lr.shape[1] * cfg.scale)
    depth = _hr_depth(cfg, hr_shape)
    model = degrade.build_model(cfg.atmosphere, depth, cfg.num_bins, cfg.scale, cfg.pixel_pitch)
    bank = kernels.load_bank(cfg.bank_path) if cfg.bank_path else None
    variant = "bank" if cfg.solver.mode == "bank" else "full"
    sr, traces = bench.restore_image(variant, lr, depth, model, cfg, bank)
    out = Path(cfg.out)
    result = {"sr": out / "sr.png", "traces": []}
    imageio.write_image(result["sr"], sr)
    for c, trace in enumerate(traces):
        name = "trace.csv" if len(traces) == 1 else f"trace_c{c}.csv"
        _write_text(out / name, trace.to_csv())
        result["traces"].append(out / name)
    if cfg.hr:
        hr = imageio.read_image(cfg.hr)
        rep = metrics.report(sr, hr, shave_px=cfg.shave)
        result["report"] = rep
        print(f"psnr={rep.psnr:.4f} ssim={rep.ssim:.6f}")
    return result


def cmd_analyze(cfg: RunConfig) -> dict:
    """Depth map -> per-pixel cutoff image and a per-bin rank table."""
    depth = imageio.read_depth(_require(cfg, "depth"), cfg.depth_scale)
    cut = spectral.cutoff_map(depth, cfg.spectral, cfg.atmosphere)
    finite = cut[np.isfinite(cut)]
    peak = float(finite.max()) if finite.size else 0.0
    norm = np.where(np.isfinite(cut), cut / peak if peak > 0 else 1.0, 1.0)
    out = Path(cfg.out)
    imageio.write_image(out / "cutoff.png", norm)
    imageio.write_depth_pfm(out / "cutoff.pfm", np.where(np.isfinite(cut), cut, np.finfo(np.float32).max))
    model = degrade.build_model(cfg.atmosphere, depth, cfg.num_bins, 1, cfg.pixel_pitch)
    grid = FrequencyGrid(depth.shape[1], depth.shape[0], cfg.pixel_pitch)
    spectra = spectral.analyze_bins(model, cfg.spectral, grid)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("depth", "rank", "cutoff"))
    for d, r, c in zip(spectra.depths, spectra.ranks, spectra.cutoffs):
        w.writerow((repr(float(d)), int(r), repr(float(c))))
    _write_text(out / "rank.csv", buf.getvalue())
    return {"cutoff": out / "cutoff.png", "rank": out / "rank.csv", "cutoff_scale": peak}


def _items(cfg: RunConfig, use_synthetic: bool):
    if use_synthetic:
        return bench.synthetic_items(cfg.synthetic_count, cfg.synthetic_size)
    return bench.load_dataset(_require(cfg, "dataset"), cfg.depth_scale)


def cmd_bench(cfg: RunConfig, use_synthetic: bool = False) -> dict:
    items = _items(cfg, use_synthetic)
    bank = kernels.load_bank(cfg.bank_path) if cfg.bank_path else None
    rows, summary = bench.run_bench(items, cfg, bank)
    text = bench.rows_to_csv(rows, summary)
    path = Path(cfg.out) / "bench.csv"
    _write_text(path, text)
    sys.stdout.write(text)
    return {"csv": path, "rows": rows, "summary": summary}


def cmd_calibrate(cfg: RunConfig, use_synthetic: bool = False) -> dict:
    items = _items(cfg, use_synthetic)
    pairs = []
    for item in items:
        model, lr = bench._prepare(item, cfg)
        if item.hr.ndim == 3:
            # calibrate on luminance so one parameter set serves all channels
            hr, lr = metrics.luminance(item.hr), metrics.luminance(lr)
        else:
            hr = item.hr
        pairs.append(solver.TrainingPair(hr, lr, item.depth, model))
    res = solver.calibrate(cfg.regularizer, pairs, alpha=cfg.calib_alpha, beta=cfg.calib_beta,
                           coordinates=cfg.calib_coords, config=cfg.solver, sweeps=cfg.calib_sweeps,
                           max_evals=cfg.calib_max_evals)
    tuned = replace(cfg, regularizer=res.params)
    text = (f"# calibrated regularizer, objective {res.objective!r} after {res.evaluations} evaluations\n"
            + format_config(tuned, list(BLOCK_KEYS["regularizer"])))
    path = Path(cfg.out) / "calibrated.cfg"
    _write_text(path, text)
    return {"config": path, "result": res}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="distvar", description="Distance-adaptive variational super-resolution")
    p.add_argument("command", choices=("degrade", "restore", "analyze", "bench", "calibrate"))
    p.add_argument("--config", required=True, help="flat key = value configuration file")
    p.add_argument("--seed", type=int, help="noise seed (overrides 'seed')")
    p.add_argument("--scale", type=int, choices=(2, 4, 8))
    p.add_argument("--mode", choices=("analytic", "bank"))
    p.add_argument("--shave", type=int, help="border pixels excluded from metrics")
    p.add_argument("--out", help="output directory")
    p.add_argument("--synthetic", action="store_true", help="bench/calibrate on the built-in synthetic suite")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.shave is not None and args.shave < 0:
            raise ConfigError("--shave must be >= 0")
        cfg = with_overrides(load_config(args.config), args.seed, args.scale, args.mode, args.shave, args.out)
        cfg = replace(cfg)  # re-run validation after overrides
        handler = {"degrade": cmd_degrade, "restore": cmd_restore, "analyze": cmd_analyze}.get(args.command)
        if handler is not None:
            handler(cfg)
        elif args.command == "bench":
            cmd_bench(cfg, args.synthetic)
        else:
            cmd_calibrate(cfg, args.synthetic)
    except (ConfigError, ValueError, FileNotFoundError, OSError) as exc:
        print(f"distvar {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
