"""Spectra of the Kronecker penalty Gram operator and linear-smoother baselines.

The Gram operator ``D^T D`` is a Kronecker sum of per-axis Grams
``Q_j^T Q_j``, so its eigenpairs are tensor products of per-axis eigenpairs.
Everything below works axis by axis and never forms an n-by-n matrix.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.fft import dctn, idctn

from .lattice import LatticeError, LatticeShape, as_shape
from .penalty import build_diff_1d


def chain_laplacian_eigvals(N: int) -> np.ndarray:
    """Eigenvalues ``4 sin^2(pi (l-1) / 2N)``, l = 1..N, of the chain-graph Laplacian."""
    if N < 1:
        raise ValueError("N must be positive")
    return 4.0 * np.sin(np.pi * np.arange(N) / (2 * N)) ** 2


@dataclass(frozen=True)
class AxisSpectrum:
    """Eigenpairs of ``Q^T Q`` for the order-(k+1) difference matrix ``Q``.

    ``rho`` is nondecreasing; the first ``min(k+1, N)`` entries are exactly
    zero and their eigenvectors are discrete orthonormal polynomials.
    ``vectors[:, l]`` is the eigenvector for ``rho[l]``.
    """

    N: int
    k: int
    rho: np.ndarray
    vectors: np.ndarray


def discrete_legendre(design, degree: int) -> np.ndarray:
    """Orthonormal polynomial basis of degree <= ``degree`` on the design points."""
    z = np.asarray(design, dtype=float)
    N = z.size
    ncol = min(degree + 1, N)
    t = (2 * z - (z[0] + z[-1])) / (z[-1] - z[0]) if N > 1 else np.zeros(1)
    V = np.vander(t, ncol, increasing=True)
    P, _ = np.linalg.qr(V)
    return _fix_signs(P)


def _fix_signs(V: np.ndarray) -> np.ndarray:
    # first clearly nonzero component of every column made positive
    V = V.copy()
    for c in range(V.shape[1]):
        col = V[:, c]
        big = np.flatnonzero(np.abs(col) > 1e-10 * np.abs(col).max())
        if big.size and col[big[0]] < 0:
            V[:, c] = -col
    return V


def axis_spectrum(N: int, k: int, design=None) -> AxisSpectrum:
    return _axis_spectrum(int(N), int(k), None if design is None else tuple(np.asarray(design, float)))


@lru_cache(maxsize=128)
def _axis_spectrum(N, k, design):
    z = np.arange(1, N + 1) / N if design is None else np.array(design)
    Q = build_diff_1d(z, k + 1).matrix().toarray()
    nz = min(k + 1, N)
    null = discrete_legendre(z, k)
    if Q.shape[0] == 0:
        rho = np.zeros(N)
        vecs = null
    else:
        vals, vecs = np.linalg.eigh(Q.T @ Q)
        rho = np.concatenate([np.zeros(nz), np.maximum(vals[nz:], 0.0)])
        vecs = np.hstack([null, _fix_signs(vecs[:, nz:])])
    rho.setflags(write=False)
    vecs.setflags(write=False)
    return AxisSpectrum(N, k, rho, vecs)


def _spectra(shape: LatticeShape, k: int) -> list[AxisSpectrum]:
    if shape.uniform:
        return [axis_spectrum(N, k) for N in shape.dims]
    return [axis_spectrum(N, k, z) for N, z in zip(shape.dims, shape.designs)]


def gram_eigvals(shape, k: int) -> np.ndarray:
    """All eigenvalues ``xi_i = sum_j rho_{i_j}`` as an array indexed by multi-index."""
    shape = as_shape(shape)
    out = np.zeros(shape.dims)
    for j, s in enumerate(_spectra(shape, k)):
        out = out + s.rho.reshape([-1 if a == j else 1 for a in range(shape.d)])
    return out


def iter_gram_eigvals(shape, k: int):
    """Lazily yield ``(multi_index, xi)`` pairs with 1-based indices."""
    shape = as_shape(shape)
    rhos = [s.rho for s in _spectra(shape, k)]
    for idx in itertools.product(*(range(N) for N in shape.dims)):
        yield tuple(i + 1 for i in idx), float(sum(r[i] for r, i in zip(rhos, idx)))


def operator_norm_sq(shape, k: int) -> float:
    """Largest eigenvalue of ``D^T D`` (squared spectral norm of the penalty)."""
    shape = as_shape(shape)
    return float(sum(s.rho[-1] for s in _spectra(shape, k)))


def tensor_apply(mats, X: np.ndarray) -> np.ndarray:
    """Apply ``mats[j]`` along axis j of ``X`` for every axis."""
    for j, A in enumerate(mats):
        X = np.moveaxis(np.tensordot(A, X, axes=(1, j)), 0, j)
    return X


def spectral_coefficients(y, k: int, shape=None) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    shape = as_shape(shape if shape is not None else y.shape)
    return tensor_apply([s.vectors.T for s in _spectra(shape, k)], y)


def from_spectral(c, k: int, shape=None) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    shape = as_shape(shape if shape is not None else c.shape)
    return tensor_apply([s.vectors for s in _spectra(shape, k)], c)


def index_set_mask(dims, Q) -> np.ndarray:
    """Boolean mask for an index set given as a mask, a side ``tau`` (box
    ``[tau]^d``), per-axis sides, or an iterable of 1-based multi-indices."""
    dims = tuple(dims)
    if isinstance(Q, np.ndarray) and Q.dtype == bool:
        if Q.shape != dims:
            raise ValueError("mask shape does not match the lattice")
        return Q
    if isinstance(Q, (int, np.integer)):
        Q = (int(Q),) * len(dims)
    Q = list(Q)
    if Q and all(isinstance(q, (int, np.integer)) for q in Q) and len(Q) == len(dims):
        mask = np.zeros(dims, bool)
        mask[tuple(slice(0, int(t)) for t in Q)] = True
        return mask
    mask = np.zeros(dims, bool)
    for idx in Q:
        mask[tuple(int(i) - 1 for i in idx)] = True
    return mask


def eigenmaps_fit(y, k: int, Q, shape=None) -> np.ndarray:
    """Project ``y`` onto the tensor eigenvectors indexed by ``Q``."""
    y = np.asarray(y, dtype=float)
    shape = as_shape(shape if shape is not None else y.shape)
    c = spectral_coefficients(y, k, shape)
    c[~index_set_mask(shape.dims, Q)] = 0.0
    return from_spectral(c, k, shape)


def eigenmaps_tau(Cn: float, n: int, k: int, d: int) -> int:
    """Box side ``tau`` with ``tau^d = (C_n n^(s - 1/2))^(1/s)``, constant 1,
    clamped to ``[k + 2, N]``."""
    s = (k + 1) / d
    N = round(n ** (1 / d))
    tau = (Cn * n ** (s - 0.5)) ** (1 / (s * d))
    return int(min(max(round(tau), k + 2), N))


def poly_projection(y, k: int, shape=None) -> np.ndarray:
    """Least-squares projection onto polynomials of max degree ``k``."""
    y = np.asarray(y, dtype=float)
    shape = as_shape(shape if shape is not None else y.shape)
    if any(N < k + 1 for N in shape.dims):
        raise LatticeError(f"every side must be >= k+1 = {k + 1}")
    P = [discrete_legendre(z, k) for z in shape.designs]
    return tensor_apply([B @ B.T for B in P], y)


def pinv_gram_apply(r, k: int, shape=None) -> np.ndarray:
    """``(D^T D)^+ r`` through the Kronecker-sum eigendecomposition."""
    r = np.asarray(r, dtype=float)
    shape = as_shape(shape if shape is not None else r.shape)
    c = spectral_coefficients(r, k, shape)
    xi = gram_eigvals(shape, k)
    tiny = 1e-12 * max(xi.max(), 1.0)
    inv = np.where(xi > tiny, 1.0 / np.where(xi > tiny, xi, 1.0), 0.0)
    return from_spectral(c * inv, k, shape)


def lambda_max(y, k: int, shape=None) -> float:
    """``||(D^T)^+ (y - P y)||_inf`` with ``P`` the polynomial projection; the
    smallest lambda at which the fit is (at most) the polynomial projection
    when ``D^T`` has trivial kernel, and an upper bound otherwise."""
    from .penalty import KroneckerPenalty

    y = np.asarray(y, dtype=float)
    shape = as_shape(shape if shape is not None else y.shape)
    r = y - poly_projection(y, k, shape)
    u = KroneckerPenalty(shape, k).apply(pinv_gram_apply(r, k, shape))
    return float(np.abs(u).max()) if u.size else 0.0


def dct_eigvals(dims) -> np.ndarray:
    """Eigenvalues of the grid Laplacian, arranged to match ``dctn`` coefficients."""
    out = np.zeros(tuple(dims))
    for j, N in enumerate(dims):
        out = out + chain_laplacian_eigvals(N).reshape([-1 if a == j else 1 for a in range(len(dims))])
    return out


def laplacian_filter(y, fn) -> np.ndarray:
    """Apply ``fn(L)`` to ``y`` where ``L`` is the grid Laplacian (DCT-II diagonalization)."""
    y = np.asarray(y, dtype=float)
    c = dctn(y, type=2, norm="ortho")
    return idctn(c * fn(dct_eigvals(y.shape)), type=2, norm="ortho")


def laplacian_smoother(y, power: int, gamma: float) -> np.ndarray:
    """Solve ``(I + gamma L^power) theta = y``."""
    if power not in (1, 2):
        raise ValueError("power must be 1 or 2")
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    return laplacian_filter(y, lambda lam: 1.0 / (1.0 + gamma * lam ** power))


def kernel_smoother(y, bandwidth: float, shape=None) -> np.ndarray:
    """Nadaraya-Watson fit with a spherical Gaussian kernel over lattice coordinates."""
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    y = np.asarray(y, dtype=float)
    shape = as_shape(shape if shape is not None else y.shape)
    K = [np.exp(-((z[:, None] - z[None, :]) ** 2) / (2 * bandwidth ** 2)) for z in shape.designs]
    return tensor_apply(K, y) / tensor_apply(K, np.ones(shape.dims))
