import numpy as np
import pytest
from hypothesis import given, strategies as st

from ktf import experiments as ex
from ktf.experiments import (
    RateRow,
    add_noise,
    canonical_scaling,
    eigenmaps_path_mse,
    gen_linear,
    gen_one_hot,
    gen_spike,
    gen_two_peak,
    lambda_grid,
    make_truth,
    mse,
    rate_slope,
    run_rate_experiment,
    synthetic_image,
    tuning_curve,
)
from ktf.lattice import LatticeShape, forward_diff
from ktf.penalty import KroneckerPenalty
from ktf.solvers import dual_reference_solve
from ktf.spectral import eigenmaps_fit, lambda_max


def test_canonical_scaling_values():
    assert canonical_scaling(64 * 64, 0, 2) == pytest.approx(64.0)
    assert canonical_scaling(64 * 64, 1, 2) == pytest.approx(1.0)
    assert canonical_scaling(1000, 0, 1) == pytest.approx(1.0)
    assert canonical_scaling(8 ** 3, 0, 3) == pytest.approx(64.0)


# generators


def test_two_peak_deterministic_and_shaped():
    a, b = gen_two_peak(50), gen_two_peak(50)
    assert a.tobytes() == b.tobytes()
    # both bumps and the background are symmetric in the two coordinates
    np.testing.assert_array_equal(a, a.T)
    i, j = np.unravel_index(np.argmax(a), a.shape)
    z = np.arange(1, 51) / 50
    assert abs(z[i] - 0.2) <= 0.04 and abs(z[j] - 0.2) <= 0.04
    # peak heights above the background reflect the 3:1 amplitude ratio
    big = a[9, 9] - 0.1 * 0.4
    small = a[39, 39] - 0.1 * 1.6
    assert big == pytest.approx(3.0, rel=1e-6)
    assert small == pytest.approx(1.0, rel=1e-6)


@pytest.mark.parametrize("dims", [(16, 16), (33, 33), (8, 8, 8), (20,)])
def test_one_hot_canonical_ktv(dims):
    shape = LatticeShape(dims)
    theta = gen_one_hot(shape)
    assert np.count_nonzero(theta) == 1
    target = canonical_scaling(shape.n, 0, shape.d)
    assert KroneckerPenalty(shape, 0).ktv(theta) == pytest.approx(target, rel=1e-9)


def test_one_hot_requires_k0():
    with pytest.raises(ValueError):
        gen_one_hot((8, 8), k=1)


@pytest.mark.parametrize("dims", [(17, 17), (9, 13), (9, 9, 9)])
def test_spike_canonical_ktv_and_symmetry(dims):
    shape = LatticeShape(dims)
    theta = gen_spike(shape)
    target = canonical_scaling(shape.n, 1, shape.d)
    assert KroneckerPenalty(shape, 1).ktv(theta) == pytest.approx(target, rel=1e-9)
    for j in range(shape.d):
        np.testing.assert_array_equal(theta, np.flip(theta, axis=j))
    assert np.argmax(theta) == np.ravel_multi_index(tuple((N - 1) // 2 for N in dims), dims)


@pytest.mark.parametrize("dims", [(16, 16), (6, 6, 6)])
def test_linear_k0(dims):
    shape = LatticeShape(dims)
    theta = gen_linear(shape, 0)
    target = canonical_scaling(shape.n, 0, shape.d)
    assert KroneckerPenalty(shape, 0).ktv(theta) == pytest.approx(target, rel=1e-9)
    for j in range(shape.d):
        assert np.abs(forward_diff(theta, j + 1, 2)).max() <= 1e-12 * np.abs(theta).max()
    # constant along level sets of the coordinate sum
    idx = np.indices(dims).sum(axis=0)
    for s in np.unique(idx):
        vals = theta[idx == s]
        assert np.ptp(vals) <= 1e-12 * np.abs(theta).max()


def test_linear_k1_is_unit_sup_norm():
    theta = gen_linear((10, 10), 1)
    assert np.abs(theta).max() == pytest.approx(1.0)
    assert KroneckerPenalty((10, 10), 1).ktv(theta) <= 1e-10


def test_make_truth_names():
    for name in ex.EXPERIMENTS:
        k = 1 if name == "spike" else 0
        assert make_truth(name, 8, 2, k).shape == (8, 8)
    with pytest.raises(ValueError):
        make_truth("nope", 8, 2, 0)
    with pytest.raises(ValueError):
        make_truth("two-peak-demo", 8, 3, 0)


def test_synthetic_image_range():
    img = synthetic_image(64)
    assert img.shape == (64, 64)
    assert img.min() >= 0 and img.max() <= 1
    assert np.unique(np.round(img, 6)).size > 10


# noise


def test_add_noise_sigma_zero_identity(rng):
    s = rng.normal(size=(5, 5))
    np.testing.assert_array_equal(add_noise(s, sigma=0.0), s)


@given(seed=st.integers(0, 2 ** 31))
def test_add_noise_seeded(seed):
    s = np.zeros((6, 7))
    a = add_noise(s, sigma=1.0, seed=seed)
    b = add_noise(s, sigma=1.0, seed=seed)
    assert a.tobytes() == b.tobytes()


def test_add_noise_seeds_differ():
    s = np.zeros(100)
    assert not np.array_equal(add_noise(s, sigma=1.0, seed=1), add_noise(s, sigma=1.0, seed=2))


def test_add_noise_variance():
    s = np.zeros((256, 256))
    y = add_noise(s, sigma=0.7, seed=3)
    assert abs(y.var() / 0.49 - 1) <= 0.05


def test_add_noise_snr():
    s = gen_two_peak(256)
    y = add_noise(s, snr=0.5, seed=0)
    sigma2 = s.var() / 0.5
    assert abs(np.var(y - s) / sigma2 - 1) <= 0.05


def test_add_noise_arguments():
    with pytest.raises(ValueError):
        add_noise(np.zeros(3))
    with pytest.raises(ValueError):
        add_noise(np.zeros(3), sigma=1.0, snr=1.0)
    with pytest.raises(ValueError):
        add_noise(np.zeros(3), snr=-1.0)
    with pytest.raises(ValueError):
        add_noise(np.zeros(3), sigma=-1.0)


# grids and tuning curves


def test_lambda_grid():
    g = lambda_grid(2.0, 20)
    assert g.size == 20
    assert g[0] == pytest.approx(2e-3) and g[-1] == pytest.approx(2.0)
    ratios = g[1:] / g[:-1]
    np.testing.assert_allclose(ratios, ratios[0])


def test_lambda_max_gives_polynomial_fit(rng):
    # at lambda_max the 1-d k=0 fit is the mean (D^T has trivial kernel)
    y = rng.normal(size=30)
    lmax = lambda_max(y, 0)
    fit = dual_reference_solve(y, 0, lmax * 1.0001, tol=1e-10)
    np.testing.assert_allclose(fit.theta, np.full(30, y.mean()), atol=1e-5)
    below = dual_reference_solve(y, 0, lmax * 0.9, tol=1e-10)
    assert np.ptp(below.theta) > 1e-4


def test_tuning_curve_lambda_zero_is_noise_level():
    truth = gen_one_hot((12, 12))
    tc = tuning_curve(truth, "ktf", [0.0, 1.0], reps=3, sigma=1.0, seed=5)
    noise = [mse(add_noise(truth, sigma=1.0, seed=[5, r]), truth) for r in range(3)]
    assert tc.mean[0] == pytest.approx(np.mean(noise), rel=1e-6)
    assert tc.sd[0] == pytest.approx(np.std(noise, ddof=1), rel=1e-5)


def test_tuning_curve_continuity():
    truth = gen_one_hot((16, 16))
    y0 = add_noise(truth, sigma=1.0, seed=[0, 0])
    grid = lambda_grid(lambda_max(y0, 0), 20)
    tc = tuning_curve(truth, "ktf", grid, reps=2, sigma=1.0, seed=0)
    jumps = tc.mean[1:] / tc.mean[:-1]
    assert np.all(jumps < 10) and np.all(jumps > 0.1)


def test_tuning_curve_failures_recorded(monkeypatch):
    real = ex.ktf_admm

    def flaky(y, k, lam, cfg, warm=None):
        if lam > 0.5:
            raise RuntimeError("boom")
        return real(y, k, lam, cfg, warm=warm)

    monkeypatch.setattr(ex, "ktf_admm", flaky)
    tc = tuning_curve(gen_one_hot((8, 8)), "ktf", [0.1, 1.0], reps=2, sigma=1.0)
    assert np.isfinite(tc.mean[0]) and np.isnan(tc.mean[1])
    assert len(tc.failures) == 2
    assert tc.best == 0


def test_tuning_curve_arguments():
    with pytest.raises(ValueError):
        tuning_curve(np.zeros((4, 4)), "ktf", [], reps=1)
    with pytest.raises(ValueError):
        tuning_curve(np.zeros((4, 4)), "ktf", [1.0], reps=0)
    with pytest.raises(ValueError):
        tuning_curve(np.zeros((4, 4)), "wavelets", [1.0], reps=1)


def test_eigenmaps_path_matches_direct_projection(rng):
    truth = gen_one_hot((10, 10))
    y = add_noise(truth, sigma=1.0, seed=1)
    taus, curve = eigenmaps_path_mse(y, truth, 0)
    for tau in (1, 3, 7, 10):
        assert curve[tau - 1] == pytest.approx(mse(eigenmaps_fit(y, 0, tau), truth), rel=1e-10)
    assert list(taus) == list(range(1, 11))


def test_ktf_beats_eigenmaps_on_one_hot():
    truth = gen_one_hot((64, 64))
    y0 = add_noise(truth, sigma=1.0, seed=[0, 0])
    ktf = tuning_curve(truth, "ktf", lambda_grid(lambda_max(y0, 0), 12), reps=2, seed=0)
    eig = tuning_curve(truth, "eigenmaps", np.arange(1, 65), reps=2, seed=0)
    assert ktf.mean[ktf.best] <= eig.mean[eig.best]


# rates


def test_rate_slope_power_law():
    ns = [100, 400, 1600, 6400]
    fit = rate_slope([(n, 3.0 * n ** -0.5) for n in ns])
    assert fit.slope == pytest.approx(-0.5, abs=1e-12)
    assert fit.stderr == pytest.approx(0.0, abs=1e-12)


def test_rate_slope_constant():
    assert rate_slope([RateRow(n, "ktf", 0.2, 0.0, 1.0) for n in (10, 20, 40)]).slope == pytest.approx(0.0, abs=1e-12)


def test_rate_slope_degenerate():
    with pytest.raises(ValueError):
        rate_slope([(10, 1.0), (10, 2.0), (20, 1.0)])
    with pytest.raises(ValueError):
        rate_slope([(10, 1.0), (20, 0.0), (40, 1.0)])


def test_rate_experiment_deterministic():
    a = run_rate_experiment("one-hot", [6, 8, 10], 0, 2, reps=2, n_lambda=5)
    b = run_rate_experiment("one-hot", [6, 8, 10], 0, 2, reps=2, n_lambda=5)
    assert a.rows == b.rows
    assert a.methods() == ["eigenmaps", "ktf"]
    for r in a.rows:
        assert r.best_mse >= 0 and r.sd >= 0
    assert [r.n for r in a.method_rows("ktf")] == [36, 64, 100]
