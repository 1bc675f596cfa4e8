import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import signal

from distvar import kernels
from distvar.kernels import DepthClampWarning, KernelBank


def random_bank(rng, m=4, k=3, lip=1.0, features=kernels.FEATURES, scale=0.3):
    anchors = np.cumsum(rng.uniform(0.5, 3.0, m))
    weights = scale * rng.standard_normal((m, len(features), k, k))
    return KernelBank(anchors, weights, lip, features)


def per_pixel_apply(bank, u, depth):
    """Interpolate a kernel set at every pixel and correlate there."""
    r = bank.kernel_size // 2
    feats = [np.pad(f, r, mode="edge") for f in kernels.feature_maps(bank, u)]
    out = np.zeros_like(u)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DepthClampWarning)
        for i in range(u.shape[0]):
            for j in range(u.shape[1]):
                w = kernels.interpolate_kernels(bank, depth[i, j])
                for f, fp in enumerate(feats):
                    out[i, j] += np.sum(fp[i : i + 2 * r + 1, j : j + 2 * r + 1] * w[f])
    return out


def test_interpolation_at_nodes_and_midpoints():
    bank = random_bank(np.random.default_rng(0))
    for m, a in enumerate(bank.anchors):
        assert np.array_equal(kernels.interpolate_kernels(bank, a), bank.weights[m])
    mid = 0.5 * (bank.anchors[1] + bank.anchors[2])
    expect = 0.5 * (bank.weights[1] + bank.weights[2])
    assert np.allclose(kernels.interpolate_kernels(bank, mid), expect, rtol=0, atol=1e-15)


def test_interpolation_clamps_with_warning():
    bank = random_bank(np.random.default_rng(1))
    with pytest.warns(DepthClampWarning):
        w = kernels.interpolate_kernels(bank, bank.anchors[-1] + 5.0)
    assert np.array_equal(w, bank.weights[-1])


def test_projection_enforces_bound_on_random_pairs():
    rng = np.random.default_rng(2)
    bank = kernels.project_lipschitz(random_bank(rng, m=6, lip=0.2, scale=1.0))
    lo, hi = bank.anchors[0], bank.anchors[-1]
    for _ in range(1000):
        d1, d2 = rng.uniform(lo, hi, 2)
        diff = kernels.interpolate_kernels(bank, d1) - kernels.interpolate_kernels(bank, d2)
        norms = np.sqrt((diff**2).sum(axis=(1, 2)))
        assert np.all(norms <= bank.lipschitz_L * abs(d1 - d2) + 1e-12)


def test_projection_single_violation_rescaled():
    w = np.zeros((2, 1, 3, 3))
    w[1, 0, 1, 1] = 2.0
    bank = KernelBank(np.array([0.0, 1.0]), w, 1.0, ("identity",))
    out = kernels.project_lipschitz(bank)
    assert np.linalg.norm(out.weights[1, 0] - out.weights[0, 0]) == pytest.approx(1.0, rel=1e-15)
    assert out.weights[1, 0, 1, 1] == pytest.approx(1.0, rel=1e-15)


def test_projection_feasible_bank_bitwise_unchanged():
    rng = np.random.default_rng(3)
    bank = random_bank(rng, lip=100.0)
    assert kernels.lipschitz_violation(bank) < 0
    assert np.array_equal(kernels.project_lipschitz(bank).weights, bank.weights)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.01, 2.0))
def test_projection_idempotent(seed, lip):
    bank = random_bank(np.random.default_rng(seed), m=5, lip=lip, scale=1.0)
    once = kernels.project_lipschitz(bank)
    twice = kernels.project_lipschitz(once)
    assert np.array_equal(once.weights, twice.weights)
    assert kernels.lipschitz_violation(once) <= 1e-12


def test_identity_bank_reproduces_input():
    w = np.zeros((3, 1, 5, 5))
    w[:, 0, 2, 2] = 1.0
    bank = KernelBank(np.array([1.0, 2.0, 4.0]), w, 1.0, ("identity",))
    rng = np.random.default_rng(4)
    u = rng.random((9, 7))
    assert np.allclose(kernels.apply_bank(bank, u, rng.uniform(0, 6, (9, 7))), u, rtol=0, atol=1e-15)


def test_constant_depth_is_shift_invariant():
    rng = np.random.default_rng(5)
    bank = random_bank(rng)
    u = rng.random((10, 11))
    d = 0.3 * bank.anchors[1] + 0.7 * bank.anchors[2]
    w = kernels.interpolate_kernels(bank, d)
    r = bank.kernel_size // 2
    expect = sum(
        signal.correlate(np.pad(f, r, mode="edge"), w[i], mode="valid")
        for i, f in enumerate(kernels.feature_maps(bank, u))
    )
    assert np.allclose(kernels.apply_bank(bank, u, np.full(u.shape, d)), expect, rtol=0, atol=1e-12)


def test_zero_kernels_give_zero_field():
    bank = kernels.default_bank(1.0, 10.0)
    u = np.random.default_rng(6).random((8, 8))
    assert not kernels.apply_bank(bank, u, np.full((8, 8), 3.0)).any()


def test_anchor_blending_equals_per_pixel_interpolation():
    rng = np.random.default_rng(7)
    for _ in range(5):
        bank = random_bank(rng, k=3)
        u = rng.random((8, 8))
        depth = rng.uniform(bank.anchors[0] - 1, bank.anchors[-1] + 1, (8, 8))
        assert np.allclose(kernels.apply_bank(bank, u, depth), per_pixel_apply(bank, u, depth), rtol=0, atol=1e-12)


def test_apply_linear_in_u():
    rng = np.random.default_rng(8)
    bank = random_bank(rng)
    u, v = rng.random((2, 8, 8))
    depth = rng.uniform(bank.anchors[0], bank.anchors[-1], (8, 8))
    lhs = kernels.apply_bank(bank, 2.0 * u - v, depth)
    rhs = 2.0 * kernels.apply_bank(bank, u, depth) - kernels.apply_bank(bank, v, depth)
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_fit_recovers_planted_bank():
    rng = np.random.default_rng(9)
    anchors = np.array([1.0, 3.0, 5.0])
    planted_w = 0.2 * rng.standard_normal((3, 1, 3, 3))
    planted = kernels.project_lipschitz(KernelBank(anchors, planted_w, 1.0, ("identity",)))
    fields = [rng.standard_normal((16, 16)) for _ in range(3)]
    depths = [rng.uniform(1, 5, (16, 16)) for _ in range(3)]
    targets = [kernels.apply_bank(planted, u, d) for u, d in zip(fields, depths)]
    start = KernelBank(anchors, np.zeros_like(planted_w), 1.0, ("identity",))
    fit = kernels.fit_bank(start, fields, depths, targets, iterations=500)
    assert fit.residuals[-1] <= 1e-6 * fit.initial_residual
    assert all(b <= a for a, b in zip(fit.residuals, fit.residuals[1:]))


def test_fit_zero_targets_shrinks_to_zero():
    rng = np.random.default_rng(10)
    bank = random_bank(rng, m=2, k=3, features=("identity",), lip=10.0, scale=0.1)
    fields = [rng.standard_normal((12, 12))]
    depths = [rng.uniform(bank.anchors[0], bank.anchors[-1], (12, 12))]
    fit = kernels.fit_bank(bank, fields, depths, [np.zeros((12, 12))], iterations=500)
    assert fit.residuals[-1] <= 1e-8 * fit.initial_residual
    assert np.abs(fit.bank.weights).max() < np.abs(bank.weights).max()


def test_single_step_matches_hand_derived_update():
    rng = np.random.default_rng(11)
    u = rng.random((3, 3))
    t = rng.random((3, 3))
    w0 = rng.standard_normal((1, 1, 3, 3))
    bank = KernelBank(np.array([2.0]), w0, 1.0, ("identity",))
    padded = np.pad(u, 1, mode="edge")
    # row p of X holds the 3x3 patch correlated with the kernel at pixel p
    x = np.array([padded[i : i + 3, j : j + 3].ravel() for i in range(3) for j in range(3)])
    grad = 2.0 * x.T @ (x @ w0.ravel() - t.ravel())
    step = 0.5 / np.linalg.eigvalsh(x.T @ x)[-1]
    expect = w0.ravel() - step * grad
    fit = kernels.fit_bank(bank, [u], [np.full((3, 3), 2.0)], [t], iterations=1, step=step)
    assert np.allclose(fit.bank.weights.ravel(), expect, rtol=1e-12, atol=1e-14)
    assert fit.residuals[1] < fit.residuals[0]


def test_fit_input_validation():
    bank = kernels.default_bank(1.0, 2.0)
    with pytest.raises(ValueError):
        kernels.fit_bank(bank, [], [], [])
    with pytest.raises(ValueError):
        kernels.fit_bank(bank, [np.zeros((4, 4))], [np.ones((4, 4))], [])


def test_save_load_roundtrip(tmp_path):
    bank = random_bank(np.random.default_rng(12), lip=0.7)
    path = tmp_path / "bank.dkb"
    kernels.save_bank(path, bank)
    back = kernels.load_bank(path)
    assert np.array_equal(back.anchors, bank.anchors)
    assert np.array_equal(back.weights, bank.weights)
    assert back.lipschitz_L == 0.7
    raw = path.read_bytes()
    assert raw[:4] == b"DKB1"


def test_load_rejects_corrupt_files(tmp_path):
    bank = random_bank(np.random.default_rng(13))
    path = tmp_path / "bank.dkb"
    kernels.save_bank(path, bank)
    raw = path.read_bytes()
    (tmp_path / "bad_magic.dkb").write_bytes(b"XXXX" + raw[4:])
    (tmp_path / "short.dkb").write_bytes(raw[:-8])
    with pytest.raises(ValueError, match="magic"):
        kernels.load_bank(tmp_path / "bad_magic.dkb")
    with pytest.raises(ValueError, match="bytes"):
        kernels.load_bank(tmp_path / "short.dkb")


def test_bank_validation():
    with pytest.raises(ValueError):
        KernelBank(np.array([2.0, 1.0]), np.zeros((2, 4, 3, 3)))
    with pytest.raises(ValueError):
        KernelBank(np.array([1.0, 2.0]), np.zeros((2, 4, 4, 4)))
    with pytest.raises(ValueError):
        KernelBank(np.array([1.0]), np.zeros((1, 4, 3, 3)), lipschitz_L=0.0)
