import numpy as np
import pytest
from scipy.fft import dct
from scipy.stats import linregress

from ktf.lattice import LatticeError
from ktf.spectral import (axis_spectrum, chain_laplacian_eigvals, eigenmaps_fit, eigenmaps_tau, gram_eigvals,
                          index_set_mask, iter_gram_eigvals, kernel_smoother, lambda_max, laplacian_smoother,
                          operator_norm_sq, pinv_gram_apply, poly_projection, spectral_coefficients)

from conftest import dense_diff, dense_penalty, random_poly


def spectral_cdf_slope(k, d, N, lo=0.01, hi=0.3):
    """Log-log slope of the empirical eigenvalue CDF over its bulk, taken as
    the CDF range [lo, hi]."""
    xi = np.sort(gram_eigvals((N,) * d, k).ravel())
    F = np.arange(1, xi.size + 1) / xi.size
    m = (F >= lo) & (F <= hi) & (xi > 0)
    return linregress(np.log(xi[m]), np.log(F[m])).slope


def test_chain_laplacian():
    np.testing.assert_allclose(chain_laplacian_eigvals(2), [0, 2], atol=1e-15)
    np.testing.assert_array_equal(chain_laplacian_eigvals(1), [0])
    for N in range(1, 13):
        L = dense_diff(N, 1).T @ dense_diff(N, 1)
        np.testing.assert_allclose(np.sort(chain_laplacian_eigvals(N)), np.linalg.eigvalsh(L), atol=1e-10)


def test_axis_spectrum_k0_is_dct():
    N = 9
    s = axis_spectrum(N, 0)
    np.testing.assert_allclose(s.rho, chain_laplacian_eigvals(N), atol=1e-10)
    C = dct(np.eye(N), type=2, norm="ortho", axis=0).T
    for l in range(N):
        assert abs(abs(C[:, l] @ s.vectors[:, l]) - 1) < 1e-10


@pytest.mark.parametrize("k", [0, 1, 2, 3])
def test_axis_spectrum_basic(k):
    for N in (1, k + 1, k + 2, 10, 17):
        s = axis_spectrum(N, k)
        assert np.sum(s.rho == 0) == min(k + 1, N)
        np.testing.assert_allclose(s.vectors.T @ s.vectors, np.eye(N), atol=1e-10)
        G = dense_diff(N, k + 1).T @ dense_diff(N, k + 1)
        np.testing.assert_allclose(G @ s.vectors, s.vectors * s.rho, atol=1e-9)
        assert np.all(np.diff(s.rho) >= 0)


def test_sign_convention():
    s = axis_spectrum(12, 1)
    for c in s.vectors.T:
        first = c[np.abs(c) > 1e-10 * np.abs(c).max()][0]
        assert first > 0


@pytest.mark.parametrize("k", [0, 1, 2, 3])
def test_interlacing(k):
    for N in range(1, 65):
        rho = axis_spectrum(N, k).rho
        l = np.arange(1, N + 1)
        lower = (4 * np.sin(np.pi * np.maximum(l - k - 2, 0) / (2 * N)) ** 2) ** (k + 1)
        upper = (4 * np.sin(np.pi * (l - 1) / (2 * N)) ** 2) ** (k + 1)
        assert np.all(lower <= rho + 1e-9 * (1 + upper))
        assert np.all(rho <= upper + 1e-9 * (1 + upper))


@pytest.mark.parametrize("dims,k", [((5, 5), 0), ((5, 5), 1), ((3, 3), 0), ((4, 3, 5), 1)])
def test_gram_eigvals_dense(dims, k):
    A = dense_penalty(dims, k)
    np.testing.assert_allclose(np.sort(gram_eigvals(dims, k).ravel()), np.linalg.eigvalsh(A.T @ A), atol=1e-9)
    xi = gram_eigvals(dims, k)
    assert np.sum(xi < 1e-12) == (k + 1) ** len(dims)
    for ax in range(len(dims)):
        assert np.all(np.diff(xi, axis=ax) >= -1e-12)
    assert np.isclose(operator_norm_sq(dims, k), np.linalg.eigvalsh(A.T @ A)[-1])


def test_iter_gram_eigvals_matches():
    dims = (3, 4)
    xi = gram_eigvals(dims, 1)
    for idx, v in iter_gram_eigvals(dims, 1):
        assert v == pytest.approx(xi[tuple(i - 1 for i in idx)])


@pytest.mark.parametrize("k,d,N", [(0, 2, 32), (1, 2, 32), (1, 4, 12)])
def test_spectral_cdf_slope(k, d, N):
    assert abs(spectral_cdf_slope(k, d, N) - d / (2 * k + 2)) <= 0.1


def test_eigenmaps(rng):
    y = rng.standard_normal((6, 7))
    np.testing.assert_allclose(eigenmaps_fit(y, 1, np.ones((6, 7), bool)), y, atol=1e-10)
    np.testing.assert_allclose(eigenmaps_fit(y, 1, 2), poly_projection(y, 1), atol=1e-8)
    once = eigenmaps_fit(y, 1, (3, 4))
    np.testing.assert_allclose(eigenmaps_fit(once, 1, (3, 4)), once, atol=1e-10)
    energies = [np.linalg.norm(eigenmaps_fit(y, 1, t)) for t in range(1, 7)]
    assert np.all(np.diff(energies) >= -1e-12)


def test_index_set_forms():
    m = index_set_mask((3, 3), [(1, 1), (2, 3)])
    assert m.sum() == 2 and m[0, 0] and m[1, 2]
    assert index_set_mask((3, 4), 2).sum() == 4
    assert index_set_mask((3, 4), (1, 3)).sum() == 3


def test_eigenmaps_tau():
    assert 3 <= eigenmaps_tau(1.0, 32 * 32, 1, 2) <= 32
    assert eigenmaps_tau(1e9, 16 * 16, 0, 2) == 16
    assert eigenmaps_tau(1e-9, 16 * 16, 0, 2) == 2


def test_poly_projection(rng):
    dims = (5, 6)
    p = random_poly(rng, dims, 1)
    np.testing.assert_allclose(poly_projection(p, 1), p, atol=1e-9)
    y = rng.standard_normal(dims)
    np.testing.assert_allclose(poly_projection(y, 0), np.full(dims, y.mean()), atol=1e-12)
    r = y - poly_projection(y, 2)
    g = np.meshgrid(*[np.arange(1, N + 1) / N for N in dims], indexing="ij")
    for a in range(3):
        for b in range(3):
            assert abs(np.sum(r * g[0] ** a * g[1] ** b)) < 1e-9
    with pytest.raises(LatticeError):
        poly_projection(np.zeros((2, 5)), 2)


def test_pinv_and_lambda_max(rng):
    dims, k = (5, 4), 1
    A = dense_penalty(dims, k)
    r = rng.standard_normal(dims)
    np.testing.assert_allclose(pinv_gram_apply(r, k).ravel(), np.linalg.pinv(A.T @ A) @ r.ravel(), atol=1e-9)
    y = rng.standard_normal(dims)
    u = np.linalg.pinv(A.T) @ (y - poly_projection(y, k)).ravel()
    assert np.isclose(lambda_max(y, k), np.abs(u).max())


def test_laplacian_smoother(rng):
    y = rng.standard_normal((4, 4))
    np.testing.assert_allclose(laplacian_smoother(y, 1, 0.0), y, atol=1e-12)
    np.testing.assert_allclose(laplacian_smoother(y, 2, 1e8), np.full((4, 4), y.mean()), atol=1e-3)
    A = dense_penalty((4, 4), 0)
    L = A.T @ A
    for p, g in [(1, 0.7), (2, 0.3)]:
        x = np.linalg.solve(np.eye(16) + g * np.linalg.matrix_power(L, p), y.ravel())
        np.testing.assert_allclose(laplacian_smoother(y, p, g).ravel(), x, atol=1e-9)
    with pytest.raises(ValueError):
        laplacian_smoother(y, 3, 1.0)


def test_kernel_smoother(rng):
    y = rng.standard_normal((8, 8))
    np.testing.assert_allclose(kernel_smoother(y, 0.01), y, atol=1e-6)
    np.testing.assert_allclose(kernel_smoother(np.full((5, 6), 2.5), 0.3), 2.5, atol=1e-12)
    s = rng.standard_normal((7, 7))
    s = s + s[::-1, ::-1]
    out = kernel_smoother(s, 0.2)
    np.testing.assert_allclose(out, out[::-1, ::-1], atol=1e-12)
    with pytest.raises(ValueError):
        kernel_smoother(y, 0.0)


def test_spectral_roundtrip(rng):
    from ktf.spectral import from_spectral

    y = rng.standard_normal((4, 5, 3))
    np.testing.assert_allclose(from_spectral(spectral_coefficients(y, 1), 1), y, atol=1e-12)
