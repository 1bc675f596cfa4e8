"""Ablation on the built-in synthetic suite.

Runs every restoration variant at the requested scales and prints the
per-variant mean PSNR/SSIM plus the gains of the full model over the
bilinear baseline and the constant-g variant.

    python3 scripts/ablation.py [--count 10] [--size 64] [--scales 2 4] [--out ablation]
"""

import argparse
from dataclasses import replace
from pathlib import Path

from distvar import bench
from distvar.config import RunConfig


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--scales", type=int, nargs="+", default=[2, 4])
    p.add_argument("--variants", nargs="+", default=list(bench.VARIANTS))
    p.add_argument("--out", default="ablation")
    args = p.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    items = bench.synthetic_items(args.count, args.size)
    for scale in args.scales:
        cfg = replace(RunConfig(), scale=scale, variants=tuple(args.variants))
        rows, summary = bench.run_bench(items, cfg)
        (out / f"bench_x{scale}.csv").write_text(bench.rows_to_csv(rows, summary))
        means = {r.variant: r for r in summary}
        print(f"x{scale}")
        for r in summary:
            print(f"  {r.variant:12s} psnr {r.psnr:7.3f}  ssim {r.ssim:.4f}  {r.runtime_ms:9.1f} ms")
        if {"full", "bilinear", "constant_g"} <= means.keys():
            print(f"  full - bilinear   {means['full'].psnr - means['bilinear'].psnr:+.3f} dB")
            print(f"  full - constant_g {means['full'].psnr - means['constant_g'].psnr:+.3f} dB")


if __name__ == "__main__":
    main()
