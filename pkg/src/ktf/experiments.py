"""Signal generators, noise model, tuning curves and empirical rate fits.

Scaled generators are normalized so that their KTV equals the canonical
radius ``C_n* = n^(1 - (k+1)/d)``, which keeps the classes comparable across
sample sizes. MSE is ``||theta_hat - theta_0||^2 / n``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .lattice import LatticeShape, as_shape
from .penalty import KroneckerPenalty
from .solvers import AdmmConfig, ktf_admm
from .spectral import lambda_max, spectral_coefficients


def canonical_scaling(n: int, k: int, d: int) -> float:
    return float(n) ** (1.0 - (k + 1) / d)


def _scale_to_ktv(theta, shape, k, target):
    v = KroneckerPenalty(shape, k).ktv(theta)
    if v == 0:
        raise ValueError("signal has zero KTV and cannot be rescaled")
    out = theta * (target / v)
    check = KroneckerPenalty(shape, k).ktv(out)
    assert abs(check - target) <= 1e-9 * max(1.0, target), "canonical scaling self-check failed"
    return out


def _center(shape):
    return tuple((N - 1) // 2 for N in shape.dims)


def gen_two_peak(N: int) -> np.ndarray:
    """Smooth 2-d test surface: a tall bump near (0.2, 0.2), a small one near
    (0.8, 0.8) and a gentle tilted background."""
    z = np.arange(1, N + 1) / N
    X, Y = np.meshgrid(z, z, indexing="ij")
    bump = lambda cx, cy, a, w: a * np.exp(-((X - cx) ** 2 + (Y - cy) ** 2) / (2 * w * w))
    return bump(0.2, 0.2, 3.0, 0.08) + bump(0.8, 0.8, 1.0, 0.05) + 0.1 * (X + Y)


def gen_one_hot(shape, k: int = 0) -> np.ndarray:
    """Single nonzero site at the lattice center with ``ktv = C_n*``."""
    if k != 0:
        raise ValueError("the one-hot signal is defined for k = 0")
    shape = as_shape(shape)
    theta = np.zeros(shape.dims)
    theta[_center(shape)] = 1.0
    return _scale_to_ktv(theta, shape, 0, canonical_scaling(shape.n, 0, shape.d))


def gen_spike(shape, k: int = 1) -> np.ndarray:
    """Piecewise-linear l1 tent around the center site with ``ktv = C_n*``.

    The tent reaches zero ``max(1, N_j // 4)`` sites away from the center
    along axis j, so it is symmetric about the center.
    """
    if k != 1:
        raise ValueError("the spike signal is defined for k = 1")
    shape = as_shape(shape)
    c = _center(shape)
    dist = np.zeros(shape.dims)
    for j, N in enumerate(shape.dims):
        r = max(1, N // 4)
        dist = dist + np.abs(np.arange(N) - c[j]).reshape([-1 if a == j else 1 for a in range(shape.d)]) / r
    theta = np.maximum(0.0, 1.0 - dist)
    return _scale_to_ktv(theta, shape, 1, canonical_scaling(shape.n, 1, shape.d))


def gen_linear(shape, k: int = 0) -> np.ndarray:
    """``a * sum_j x_j``; for ``k = 0`` scaled so ``ktv = C_n*``. For ``k >= 1``
    the signal is in the penalty null space, so it is scaled to unit sup norm."""
    shape = as_shape(shape)
    theta = np.zeros(shape.dims)
    for j in range(shape.d):
        theta = theta + shape.coords(j)
    if k == 0:
        return _scale_to_ktv(theta, shape, 0, canonical_scaling(shape.n, 0, shape.d))
    return theta / np.abs(theta).max()


def add_noise(signal, sigma: float | None = None, snr: float | None = None, seed=0) -> np.ndarray:
    """Add i.i.d. Gaussian noise with ``sigma`` or with ``var(signal) / sigma^2 = snr``."""
    signal = np.asarray(signal, dtype=float)
    if (sigma is None) == (snr is None):
        raise ValueError("give exactly one of sigma and snr")
    if snr is not None:
        if snr <= 0:
            raise ValueError("snr must be positive")
        sigma = math.sqrt(float(np.var(signal)) / snr)
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if sigma == 0:
        return signal.copy()
    rng = np.random.default_rng(seed)
    return signal + sigma * rng.standard_normal(signal.shape)


def mse(a, b) -> float:
    return float(np.mean((np.asarray(a) - np.asarray(b)) ** 2))


@dataclass
class TuningCurve:
    """Mean and standard deviation of MSE per tuning value."""

    method: str
    grid: np.ndarray
    mean: np.ndarray
    sd: np.ndarray
    failures: list = field(default_factory=list)

    @property
    def best(self) -> int:
        return int(np.nanargmin(self.mean))


def lambda_grid(lmax: float, count: int = 20, lo: float = 1e-3) -> np.ndarray:
    return lmax * np.geomspace(lo, 1.0, count)


# MSE curves only need a few significant digits; looser than the solver default
EXPERIMENT_ADMM = AdmmConfig(eps_abs=1e-4, eps_rel=1e-4)


def synthetic_image(N: int = 128) -> np.ndarray:
    """Piecewise-smooth test image in [0, 1]: a shaded disk, a flat square and a
    soft ramp background."""
    z = (np.arange(N) + 0.5) / N
    X, Y = np.meshgrid(z, z, indexing="ij")
    img = 0.25 + 0.25 * X
    disk = (X - 0.35) ** 2 + (Y - 0.4) ** 2 < 0.2 ** 2
    img = np.where(disk, 0.6 + 0.3 * np.cos(4 * (X - 0.35)) * (1 - Y), img)
    square = (np.abs(X - 0.72) < 0.15) & (np.abs(Y - 0.7) < 0.15)
    img = np.where(square, 0.9, img)
    return np.clip(img, 0.0, 1.0)


def ktf_path_mse(y, truth, k, lams, config=None):
    """MSE of KTF along a lambda grid (ascending order, warm started);
    failures give NaN."""
    cfg = config or replace(EXPERIMENT_ADMM, j=k)
    out, prev, fails = [], None, []
    for i, lam in enumerate(lams):
        try:
            prev = ktf_admm(y, k, lam, cfg, warm=prev)
            out.append(mse(prev.theta, truth))
        except Exception as exc:  # recorded per cell, not fatal
            fails.append((i, repr(exc)))
            out.append(np.nan)
            prev = None
    return np.array(out), fails


def eigenmaps_path_mse(y, truth, k):
    """MSE of the box eigenmaps projection for every side ``tau = 1..min N``.

    Uses orthonormality: the error splits into the kept noisy coefficients
    and the discarded true coefficients.
    """
    cy = spectral_coefficients(y, k)
    c0 = spectral_coefficients(truth, k)
    err_in = (cy - c0) ** 2
    err_out = c0 ** 2
    d = y.ndim
    taus = np.arange(1, min(y.shape) + 1)
    n = y.size
    out = []
    for tau in taus:
        inside = tuple(slice(0, tau) for _ in range(d))
        e_in = err_in[inside].sum()
        e_out = err_out.sum() - err_out[inside].sum()
        out.append((e_in + e_out) / n)
    return taus, np.array(out)


def tuning_curve(truth, method: str, grid, reps: int = 20, sigma: float = 1.0, seed=0, k: int = 0):
    """MSE curve over ``grid`` for ``method`` in {"ktf", "eigenmaps"}.

    For KTF the grid holds lambda values; for eigenmaps the box sides tau.
    Replicate ``r`` draws its noise from the seed sequence ``(seed, r)``.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("grid must be nonempty")
    if reps < 1:
        raise ValueError("reps must be >= 1")
    truth = np.asarray(truth, dtype=float)
    rows, fails = [], []
    for r in range(reps):
        y = add_noise(truth, sigma=sigma, seed=[int(seed), r])
        if method == "ktf":
            order = np.argsort(grid)
            vals, f = ktf_path_mse(y, truth, k, grid[order])
            row = np.empty_like(vals)
            row[order] = vals
            fails += [(r, i, e) for i, e in f]
        elif method == "eigenmaps":
            taus, curve = eigenmaps_path_mse(y, truth, k)
            row = np.interp(grid, taus, curve)
        else:
            raise ValueError(f"unknown method {method!r}")
        rows.append(row)
    rows = np.array(rows)
    with warnings.catch_warnings():
        # columns where every replicate failed stay NaN
        warnings.simplefilter("ignore", RuntimeWarning)
        mean = np.nanmean(rows, axis=0)
        sd = np.nanstd(rows, axis=0, ddof=1) if reps > 1 else np.zeros(grid.size)
    return TuningCurve(method, grid, mean, sd, fails)


@dataclass(frozen=True)
class RateRow:
    n: int
    method: str
    best_mse: float
    sd: float
    best_param: float


@dataclass
class RateTable:
    experiment: str
    k: int
    d: int
    rows: list[RateRow] = field(default_factory=list)

    def method_rows(self, method: str) -> list[RateRow]:
        return [r for r in self.rows if r.method == method]

    def methods(self) -> list[str]:
        return sorted({r.method for r in self.rows})


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    stderr: float
    intercept: float


def rate_slope(points) -> SlopeFit:
    """OLS slope of ``log(best MSE)`` on ``log(n)``.

    ``points`` is a list of :class:`RateRow` or of ``(n, mse)`` pairs.
    """
    pts = [(r.n, r.best_mse) if isinstance(r, RateRow) else tuple(r) for r in points]
    ns = np.array([p[0] for p in pts], dtype=float)
    ms = np.array([p[1] for p in pts], dtype=float)
    if np.unique(ns).size < 3:
        raise ValueError("need at least 3 distinct n values")
    if np.any(ms <= 0):
        raise ValueError("MSE values must be positive for a log-log fit")
    fit = stats.linregress(np.log(ns), np.log(ms))
    return SlopeFit(float(fit.slope), float(fit.stderr), float(fit.intercept))


EXPERIMENTS = ("one-hot", "spike", "linear", "two-peak-demo")


def make_truth(name: str, N: int, d: int, k: int) -> np.ndarray:
    shape = LatticeShape((N,) * d)
    if name == "one-hot":
        return gen_one_hot(shape, k)
    if name == "spike":
        return gen_spike(shape, k)
    if name == "linear":
        return gen_linear(shape, k)
    if name == "two-peak-demo":
        if d != 2:
            raise ValueError("two-peak-demo is 2-d")
        return gen_two_peak(N)
    raise ValueError(f"unknown experiment {name!r}; choose from {', '.join(EXPERIMENTS)}")


def run_rate_experiment(name: str, Ns, k: int, d: int, reps: int = 20, seed: int = 0,
                        sigma: float = 1.0, n_lambda: int = 20, progress=None) -> RateTable:
    """Oracle-tuned MSE of KTF and the eigenmaps projection at each lattice side in ``Ns``.

    The lambda grid spans ``[1e-3, 1] * lambda_max`` geometrically, with
    ``lambda_max`` computed on the first replicate.
    """
    table = RateTable(name, k, d)
    for N in Ns:
        truth = make_truth(name, N, d, k)
        y0 = add_noise(truth, sigma=sigma, seed=[seed, 0])
        lams = lambda_grid(lambda_max(y0, k), n_lambda)
        ktf = tuning_curve(truth, "ktf", lams, reps, sigma, seed, k)
        taus = np.arange(1, N + 1, dtype=float)
        eig = tuning_curve(truth, "eigenmaps", taus, reps, sigma, seed, k)
        for tc in (ktf, eig):
            b = tc.best
            table.rows.append(RateRow(N ** d, tc.method, float(tc.mean[b]), float(tc.sd[b]), float(tc.grid[b])))
        if progress:
            progress(N, table)
    return table
