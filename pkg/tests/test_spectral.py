import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from distvar import degrade, metrics, spectral, synthetic
from distvar.degrade import AtmosphereParams
from distvar.field import FrequencyGrid, dft2, inner, upsample_bilinear
from distvar.spectral import SpectralProfile


@pytest.fixture
def model():
    depth = np.linspace(2.0, 20.0, 256).reshape(16, 16)
    return degrade.build_model(AtmosphereParams(), depth, 8, 2)


def test_rank_zero_when_threshold_exceeds_peak(model):
    grid = FrequencyGrid(16, 16)
    assert spectral.numerical_rank(model, 5.0, 1.0, grid) == 0
    assert spectral.numerical_rank(model, 5.0, 2.0, grid) == 0


def test_rank_full_for_tiny_threshold(model):
    grid = FrequencyGrid(16, 16)
    assert spectral.numerical_rank(model, 2.0, 1e-300, grid) == 256


def test_rank_matches_counting_loop(model):
    grid = FrequencyGrid(12, 10)
    fx, fy = grid.fx, grid.fy
    for d in (2.0, 9.0, 20.0):
        count = 0
        for y in fy:
            for x in fx:
                if degrade.symbol_magnitude(math.hypot(x, y), d, model.atmosphere) > 0.05:
                    count += 1
        assert spectral.numerical_rank(model, d, 0.05, grid) == count


def test_rank_monotone_over_depth_sweep(model):
    grid = FrequencyGrid(32, 32)
    ranks = [spectral.numerical_rank(model, d, 0.01, grid) for d in np.linspace(1.0, 40.0, 8)]
    assert all(a >= b for a, b in zip(ranks, ranks[1:]))
    assert ranks[0] > ranks[-1]


def test_cutoff_examples():
    assert spectral.cutoff_frequency(1.0, math.e, 1.0, 3.0) == pytest.approx(1.0, rel=1e-15)
    assert spectral.cutoff_frequency(3.0, math.e, 1.0, 1.0) == pytest.approx(1.0, rel=1e-15)
    assert spectral.cutoff_frequency(48.0, math.e, 1.0, 1.0) == pytest.approx(0.125, rel=1e-14)


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-3, 1e3), st.floats(1.01, 1e6), st.floats(1e-4, 1e4), st.floats(1e-2, 1e2))
def test_cutoff_scaling_law(d, ratio, beta, k):
    xc = spectral.cutoff_frequency(d, ratio, 1.0, beta)
    assert spectral.cutoff_frequency(16 * d, ratio, 1.0, beta) / xc == pytest.approx(0.125, rel=1e-13)
    assert spectral.cutoff_frequency(k * d, ratio, 1.0, beta) / xc == pytest.approx(k**-0.75, rel=1e-13)


@pytest.mark.parametrize("args", [(0.0, 1.0, 0.1, 1.0), (1.0, 1.0, 1.0, 1.0), (1.0, 1.0, 0.1, 0.0)])
def test_cutoff_domain_errors(args):
    with pytest.raises(ValueError):
        spectral.cutoff_frequency(*args)


def test_cutoff_map_cases():
    atm = AtmosphereParams()
    prof = SpectralProfile()
    const = spectral.cutoff_map(np.full((4, 5), 6.0), prof, atm)
    assert np.all(const == const[0, 0])
    two = np.full((4, 4), 3.0)
    two[:, 2:] = 48.0
    cmap = spectral.cutoff_map(two, prof, atm)
    assert np.allclose(cmap[:, 2:], cmap[:, :2] / 8, rtol=1e-14)
    rnd = np.random.default_rng(0).uniform(1, 30, (5, 6))
    cmap = spectral.cutoff_map(rnd, prof, atm)
    beta = degrade.scattering_coefficient(atm)
    for i in range(5):
        for j in range(6):
            assert cmap[i, j] == spectral.cutoff_frequency(float(rnd[i, j]), 1.0, prof.epsilon, beta)


def test_bandlimit_constant_unchanged():
    u = np.full((8, 8), 0.3)
    assert np.allclose(spectral.bandlimit_project(u, 0.1, 0.8), u, atol=1e-15)


def test_bandlimit_kills_out_of_band_tone():
    x = np.arange(16)
    tone = np.tile(np.sin(2 * np.pi * 5 * x / 16), (16, 1))
    assert np.max(np.abs(spectral.bandlimit_project(tone, 0.2, 0.8))) <= 1e-12


def test_bandlimit_idempotent_and_self_adjoint():
    rng = np.random.default_rng(1)
    u, v = rng.standard_normal((2, 12, 12))
    p = spectral.bandlimit_project(u, 0.3, 0.8)
    assert np.max(np.abs(spectral.bandlimit_project(p, 0.3, 0.8) - p)) <= 1e-12
    a = inner(p, v)
    b = inner(u, spectral.bandlimit_project(v, 0.3, 0.8))
    assert abs(a - b) <= 1e-12 * np.linalg.norm(u) * np.linalg.norm(v)


def test_wiener_noiseless_is_inverse_in_band(model):
    grid = FrequencyGrid(32, 32)
    prof = SpectralProfile(noise_psd=0.0)
    d = 6.0
    g = spectral.wiener_kernel(model, d, prof, grid)
    xi = grid.radial()
    band = xi <= prof.alpha * spectral.cutoff_frequency(d, 1.0, prof.epsilon, degrade.scattering_coefficient(model.atmosphere))
    sym = degrade.symbol_magnitude(xi, d, model.atmosphere)
    assert np.allclose(g[band], 1.0 / sym[band], rtol=1e-12)
    assert not g[~band].any()


def test_wiener_high_snr_limit():
    sym = np.array([0.5, 0.2, 0.9])
    s_u = np.array([1.0, 10.0, 1.0])
    s_eta = 1e-3
    g = spectral.wiener_gain(sym, s_u, s_eta)
    snr = sym**2 * s_u / s_eta
    assert np.all(snr > 100)
    assert np.allclose(g * sym, 1.0, rtol=0.01)


def test_wiener_gain_bound(model):
    grid = FrequencyGrid(24, 24)
    xi = grid.radial()
    for d in model.depth_bins:
        g = spectral.wiener_kernel(model, d, SpectralProfile(), grid)
        sym = degrade.symbol_magnitude(xi, d, model.atmosphere)
        assert np.all(np.abs(g * sym) <= 1.0)


def toy_problem():
    xi = np.abs(np.fft.fftfreq(16))
    sym = np.exp(-0.5 * (3.0 * xi) ** 2) * np.exp(-20.0 * xi**4)
    s_u = 1e-2 / (xi**2 + 1e-2)
    s_eta = np.full(16, 1e-3)
    return xi, sym, s_u, s_eta


def test_wiener_toy_beats_every_perturbation():
    _, sym, s_u, s_eta = toy_problem()
    g = spectral.wiener_gain(sym, s_u, s_eta)
    best = spectral.expected_mse(g, sym, s_u, s_eta)
    deltas = np.linspace(-0.2, 0.2, 41)
    for delta in deltas:
        assert best <= spectral.expected_mse(g * (1 + delta), sym, s_u, s_eta)
        for j in range(16):
            pert = g.copy()
            pert[j] *= 1 + delta
            assert best <= spectral.expected_mse(pert, sym, s_u, s_eta)


def test_wiener_toy_noiseless_is_banded_inverse():
    xi, sym, s_u, _ = toy_problem()
    band = xi <= 0.3
    g = spectral.wiener_gain(sym, s_u, 0.0, band)
    expect = np.where(band, 1.0 / sym, 0.0)
    assert np.max(np.abs(g - expect)) <= 1e-12


def test_wiener_restore_identity_degradation():
    atm = AtmosphereParams(r0=0.0, beta0=0.0, noise_sigma=0.0)
    depth = np.full((16, 16), 5.0)
    m = degrade.build_model(atm, depth, 2, 2)
    lr = np.random.default_rng(2).random((8, 8))
    out = spectral.wiener_restore(lr, m, depth, SpectralProfile())
    assert np.allclose(out, upsample_bilinear(lr, 2), atol=1e-12)


def test_wiener_restore_constant_depth_equals_single_kernel():
    atm = AtmosphereParams(noise_sigma=0.01)
    depth = np.full((16, 16), 8.0)
    m = degrade.build_model(atm, depth, 4, 2)
    lr = np.random.default_rng(3).random((8, 8))
    prof = SpectralProfile()
    up = upsample_bilinear(lr, 2)
    ext = np.block([[up, up[:, ::-1]], [up[::-1, :], up[::-1, ::-1]]])
    xi = FrequencyGrid(32, 32).radial()
    sym = np.exp(-0.5 * (xi * atm.r0) ** 2) * np.exp(-degrade.scattering_coefficient(atm) * xi**4 * 8.0)
    s_u = prof.psd_amplitude / (xi**2 + prof.psd_offset)
    cut = prof.alpha * (3 * math.log(1 / prof.epsilon) / (degrade.scattering_coefficient(atm) * 8.0)) ** 0.75
    g = np.where(xi <= cut, sym * s_u / (sym**2 * s_u + atm.noise_sigma**2), 0.0)
    expect = np.fft.ifft2(np.fft.fft2(ext) * g).real[:16, :16]
    assert np.allclose(spectral.wiener_restore(lr, m, depth, prof), expect, atol=1e-10)


def test_wiener_restore_beats_bilinear_on_synthetic_scenes():
    # x4, sensor blur r0 = 6: a regime where deconvolution gain exceeds the band-limit loss
    wins = 0
    for scene in synthetic.scene_suite(10, size=64, seed=100):
        atm = AtmosphereParams(r0=6.0, rng_seed=int(scene.name.split("_")[-1]))
        model, lr = synthetic.synthesize_pair(scene, atm, 4)
        w = np.clip(spectral.wiener_restore(lr, model, scene.depth, SpectralProfile()), 0, 1)
        wins += metrics.psnr(w, scene.hr) > metrics.psnr(upsample_bilinear(lr, 4), scene.hr)
    assert wins >= 9


def test_wiener_components_band_limited(model):
    prof = SpectralProfile()
    up = np.random.default_rng(4).random((16, 16))
    comps = spectral.wiener_components(up, model, prof)
    xi = FrequencyGrid(32, 32).radial()
    beta = degrade.scattering_coefficient(model.atmosphere)
    for b, comp in comps.items():
        spec = np.abs(dft2(spectral.mirror_extend(comp))) ** 2
        out = xi > prof.alpha * spectral.cutoff_frequency(model.depth_bins[b], 1.0, prof.epsilon, beta)
        assert spec[out].sum() <= 1e-10 * spec.sum()


def test_profile_validation():
    with pytest.raises(ValueError):
        SpectralProfile(alpha=1.0)
    with pytest.raises(ValueError):
        SpectralProfile(epsilon=0.0)
