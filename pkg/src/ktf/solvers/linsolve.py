"""Linear solves for the ADMM theta-update ``(I + rho D^T D) x = rhs``."""

from __future__ import annotations

import numpy as np
from scipy.fft import dctn, idctn

from ..prox import ConvergenceError
from ..spectral import dct_eigvals


def theta_update_dct(rhs, rho: float) -> np.ndarray:
    """Solve ``(I + rho L) x = rhs`` with ``L`` the grid Laplacian of first
    differences, by type-2 cosine transforms along every axis."""
    rhs = np.asarray(rhs, dtype=float)
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    if rho == 0:
        return rhs.copy()
    c = dctn(rhs, type=2, norm="ortho")
    c /= 1.0 + rho * _eig_cache(rhs.shape)
    return idctn(c, type=2, norm="ortho")


_EIG = {}


def _eig_cache(dims):
    if dims not in _EIG:
        _EIG[dims] = dct_eigvals(dims)
    return _EIG[dims]


def conjugate_gradient(apply_A, b, x0=None, tol=1e-10, maxiter=1000):
    """Plain CG for a symmetric positive definite operator.

    Returns ``(x, iters, converged)``; stops at relative residual ``tol``.
    """
    x = np.zeros_like(b) if x0 is None else x0.copy()
    r = b - apply_A(x) if x0 is not None else b.copy()
    bnorm = np.sqrt(np.vdot(b, b))
    if bnorm == 0:
        return np.zeros_like(b), 0, True
    p = r.copy()
    rs = np.vdot(r, r)
    target = (tol * bnorm) ** 2
    for it in range(maxiter):
        if rs <= target:
            return x, it, True
        Ap = apply_A(p)
        alpha = rs / np.vdot(p, Ap)
        x += alpha * p
        r -= alpha * Ap
        rs_new = np.vdot(r, r)
        p *= rs_new / rs
        p += r
        rs = rs_new
    return x, maxiter, rs <= target


def theta_update_cg(rhs, rho: float, inner, tol: float = 1e-10, x0=None,
                    maxiter: int = 2000, strict: bool = True) -> np.ndarray:
    """Solve ``(I + rho D^T D) x = rhs`` matrix-free by conjugate gradients.

    ``inner`` is a :class:`~ktf.penalty.KroneckerPenalty` (any order).
    """
    rhs = np.asarray(rhs, dtype=float)
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    if rho == 0:
        return rhs.copy()
    x, _, ok = conjugate_gradient(lambda v: v + rho * inner.gram(v), rhs, x0, tol, maxiter)
    if not ok and strict:
        raise ConvergenceError(f"CG did not reach relative residual {tol:g} in {maxiter} iterations")
    return x
