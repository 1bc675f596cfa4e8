"""Cutoff frequency and numerical rank as functions of depth.

Prints, for log-spaced depths, the closed-form cutoff, the numerical rank of
the full symbol on a fixed grid and the attenuation at the LR Nyquist
frequency for each scale.

    python3 scripts/spectral_sweep.py [--dmin 1] [--dmax 100] [--n 12] [--grid 64]
"""

import argparse

import numpy as np

from distvar import degrade, spectral
from distvar.degrade import AtmosphereParams
from distvar.field import FrequencyGrid
from distvar.spectral import SpectralProfile


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--dmin", type=float, default=1.0)
    p.add_argument("--dmax", type=float, default=100.0)
    p.add_argument("--n", type=int, default=12)
    p.add_argument("--grid", type=int, default=64)
    args = p.parse_args()

    atm, prof = AtmosphereParams(), SpectralProfile()
    depths = np.geomspace(args.dmin, args.dmax, args.n)
    model = degrade.build_model(atm, depths.reshape(1, -1), args.n, 1)
    grid = FrequencyGrid(args.grid, args.grid)
    cut = spectral.cutoff_map(depths, prof, atm)
    print(f"{'depth':>9s} {'cutoff':>10s} {'rank':>6s}" + "".join(f" {'|s|@x' + str(s):>10s}" for s in (2, 4, 8)))
    for d, c in zip(model.depth_bins, spectral.cutoff_map(model.depth_bins, prof, atm)):
        rank = spectral.numerical_rank(model, d, prof.epsilon, grid)
        nyq = [float(degrade.symbol_magnitude(0.5 / s, d, atm)) for s in (2, 4, 8)]
        print(f"{d:9.3f} {c:10.4f} {rank:6d}" + "".join(f" {v:10.3e}" for v in nyq))
    print(f"cutoff ratio d_max/d_min = {cut[-1] / cut[0]:.4f} (depth ratio {depths[-1] / depths[0]:.1f})")


if __name__ == "__main__":
    main()
