"""Benchmark harness: method variants over a dataset or the synthetic suite.

Variants
    bilinear     interpolation only (no flow iterations)
    full         depth-adaptive regularizer, analytic gradient flow
    constant_g   same flow with the regularizer fed the mean depth
    bank         flow driven by a depth-conditional kernel bank
    wiener_init  full model started from the band-limited Wiener estimate
    wiener       Wiener estimate alone
"""

from __future__ import annotations

import csv
import io
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import degrade, kernels, metrics, solver, spectral, synthetic
from .field import upsample_bilinear

__all__ = ["VARIANTS", "BenchItem", "BenchRow", "thread_count", "run_variant", "restore_image",
           "load_dataset", "synthetic_items", "run_bench", "rows_to_csv"]

VARIANTS = ("bilinear", "full", "constant_g", "bank", "wiener_init", "wiener")
CSV_COLUMNS = ("name", "variant", "scale", "psnr", "ssim", "runtime_ms")


def thread_count() -> int:
    raw = os.environ.get("DISTVAR_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"DISTVAR_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"DISTVAR_THREADS must be a positive integer, got {raw!r}")
    return n


def run_variant(variant: str, lr: np.ndarray, depth: np.ndarray, model, cfg, bank=None):
    """Restore one grayscale plane with the given variant; returns (image, trace or None)."""
    if variant == "bilinear":
        return np.clip(upsample_bilinear(lr, model.scale), 0.0, 1.0), None
    if variant == "wiener":
        return np.clip(spectral.wiener_restore(lr, model, depth, cfg.spectral), 0.0, 1.0), None
    scfg = cfg.solver
    reg_depth = None
    if variant == "full":
        scfg = replace(scfg, mode="analytic")
    elif variant == "constant_g":
        scfg = replace(scfg, mode="analytic")
        reg_depth = np.full_like(depth, float(np.mean(depth)))
    elif variant == "bank":
        scfg = replace(scfg, mode="bank")
    elif variant == "wiener_init":
        scfg = replace(scfg, mode="analytic", init="wiener")
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return solver.restore(lr, depth, model, cfg.regularizer, scfg, bank=bank, profile=cfg.spectral,
                          reg_depth=reg_depth)


def restore_image(variant: str, lr: np.ndarray, depth: np.ndarray, model, cfg, bank=None):
    """Per-channel restoration for (h, w) or (h, w, 3) input; traces in channel order.

    Colour channels may run in parallel (``DISTVAR_THREADS``); each channel's
    computation is independent, so the result does not depend on the count.
    """
    if lr.ndim == 2:
        out, trace = run_variant(variant, lr, depth, model, cfg, bank)
        return out, [trace]
    with ThreadPoolExecutor(max_workers=min(thread_count(), lr.shape[2])) as ex:
        results = list(ex.map(lambda c: run_variant(variant, lr[..., c], depth, model, cfg, bank), range(lr.shape[2])))
    return np.stack([r[0] for r in results], axis=-1), [r[1] for r in results]


def degrade_image(model, hr: np.ndarray, depth: np.ndarray, seed) -> np.ndarray:
    """Per-channel K_D + noise; channel c of a colour image is seeded with (seed, c)."""
    sigma = model.atmosphere.noise_sigma
    if hr.ndim == 2:
        return degrade.add_noise(degrade.apply(model, hr, depth), sigma, seed)
    return np.stack(
        [degrade.add_noise(degrade.apply(model, hr[..., c], depth), sigma, [seed, c]) for c in range(hr.shape[2])],
        axis=-1,
    )


@dataclass
class BenchItem:
    name: str
    hr: np.ndarray
    depth: np.ndarray  # HR resolution
    lr: np.ndarray | None = None
    seed: int = 0


@dataclass
class BenchRow:
    name: str
    variant: str
    scale: int
    psnr: float
    ssim: float
    runtime_ms: float


def load_dataset(directory, depth_scale: float = 1.0) -> list[BenchItem]:
    """Pairs ``<stem>.png|.pgm`` + ``<stem>_depth.png|.pfm``, optionally ``<stem>_lr.png``.

    Items are sorted lexicographically by file name.
    """
    from . import imageio

    directory = Path(directory)
    if not directory.is_dir():
        raise ValueError(f"dataset directory {directory} does not exist")
    items = []
    for path in sorted(directory.iterdir(), key=lambda p: p.name):
        if path.suffix.lower() not in imageio.IMAGE_SUFFIXES:
            continue
        stem = path.stem
        if stem.endswith("_depth") or stem.endswith("_lr"):
            continue
        depth_path = next((directory / f"{stem}_depth{ext}" for ext in (".pfm", ".png")
                           if (directory / f"{stem}_depth{ext}").is_file()), None)
        if depth_path is None:
            raise ValueError(f"{path.name}: missing depth map {stem}_depth.pfm or {stem}_depth.png")
        lr_path = directory / f"{stem}_lr.png"
        items.append(BenchItem(
            stem,
            imageio.read_image(path),
            imageio.read_depth(depth_path, depth_scale),
            imageio.read_image(lr_path) if lr_path.is_file() else None,
        ))
    if not items:
        raise ValueError(f"dataset {directory} is empty")
    for i, item in enumerate(items):
        item.seed = i
    return items


def synthetic_items(count: int = 10, size: int = 64, seed: int = 0) -> list[BenchItem]:
    scenes = synthetic.scene_suite(count, size, seed)
    return sorted((BenchItem(s.name, s.hr, s.depth, seed=int(s.name.rsplit("_", 1)[1])) for s in scenes),
                  key=lambda it: it.name)


def _prepare(item: BenchItem, cfg):
    atm = replace(cfg.atmosphere, rng_seed=cfg.atmosphere.rng_seed + item.seed)
    model = degrade.build_model(atm, item.depth, cfg.num_bins, cfg.scale, cfg.pixel_pitch)
    lr = item.lr if item.lr is not None else degrade_image(model, item.hr, item.depth, atm.rng_seed)
    expect = (item.hr.shape[0] // cfg.scale, item.hr.shape[1] // cfg.scale)
    if lr.shape[:2] != expect:
        raise ValueError(f"{item.name}: LR shape {lr.shape[:2]} does not match HR / scale {expect}")
    return model, lr


def _job(item: BenchItem, model, lr, variant: str, cfg, bank) -> BenchRow:
    start = time.perf_counter()
    out, _ = restore_image(variant, lr, item.depth, model, cfg, bank)
    elapsed = (time.perf_counter() - start) * 1e3
    rep = metrics.report(out, item.hr, shave_px=cfg.shave)
    return BenchRow(item.name, variant, cfg.scale, rep.psnr, rep.ssim, max(elapsed, 1e-6))


def run_bench(items: list[BenchItem], cfg, bank: kernels.KernelBank | None = None,
              threads: int | None = None) -> tuple[list[BenchRow], list[BenchRow]]:
    """(data rows, summary rows).  Rows follow item order then variant order,
    whatever the thread count."""
    if not items:
        raise ValueError("empty dataset")
    items = sorted(items, key=lambda it: it.name)
    prepared = [_prepare(it, cfg) for it in items]
    jobs = [(it, model, lr, v) for it, (model, lr) in zip(items, prepared) for v in cfg.variants]
    threads = thread_count() if threads is None else threads
    with ThreadPoolExecutor(max_workers=threads) as ex:
        rows = list(ex.map(lambda j: _job(*j, cfg, bank), jobs))
    summary = []
    for v in cfg.variants:
        sel = [r for r in rows if r.variant == v]
        summary.append(BenchRow("mean", v, cfg.scale, float(np.mean([r.psnr for r in sel])),
                                float(np.mean([r.ssim for r in sel])), float(np.mean([r.runtime_ms for r in sel]))))
    return rows, summary


def rows_to_csv(rows: list[BenchRow], summary: list[BenchRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in list(rows) + list(summary):
        w.writerow([r.name, r.variant, r.scale, f"{r.psnr:.6f}", f"{r.ssim:.6f}", f"{r.runtime_ms:.3f}"])
    return buf.getvalue()
