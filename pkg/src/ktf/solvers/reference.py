"""Dual box-QP reference solver with a certified duality gap.

Solves ``min_u 0.5 ||D^T u||^2 - y^T D^T u`` over ``|u| <= lam`` by
accelerated projected gradient with adaptive restart, recovers
``theta = y - D^T u``, and periodically polishes ``u`` by an equality
constrained least-squares solve on the current active set. Slow but
trustworthy; used as ground truth.
"""

from __future__ import annotations

import time

import numpy as np
from scipy.sparse.linalg import lsqr

from ..penalty import KroneckerPenalty
from ..prox import ConvergenceError
from ..spectral import operator_norm_sq
from .common import FitResult, check_lambda, coerce_input


def duality_gap(pen: KroneckerPenalty, y, u, lam):
    """Gap between the primal value at ``theta = y - D^T u`` and the dual value at ``u``."""
    theta = y - pen.apply_transpose(u)
    Dt = pen.apply(theta)
    gap = lam * float(np.abs(Dt).sum()) - float(Dt @ u)
    return max(gap, 0.0), theta, Dt


def _polish(pen, Dsp, y, u, lam):
    """Least squares on the free rows with the active rows pinned at ``+-lam``."""
    active = np.abs(u) >= lam * (1 - 1e-9)
    free = ~active
    r = y.ravel() - Dsp[active].T @ (lam * np.sign(u[active]))
    out = u.copy()
    out[active] = lam * np.sign(u[active])
    if free.any():
        A = Dsp[free].T
        if A.shape[0] * A.shape[1] <= 4_000_000:
            uf = np.linalg.lstsq(A.toarray(), r, rcond=None)[0]
        else:
            uf = lsqr(A, r, atol=1e-14, btol=1e-14, iter_lim=min(20 * A.shape[1], 5000), x0=u[free])[0]
        out[free] = np.clip(uf, -lam, lam)
    return out


def dual_reference_solve(y, k: int, lam: float, tol: float = 1e-8, shape=None,
                         max_iters: int = 200_000, polish_every: int = 50,
                         strict: bool = True) -> FitResult:
    """Solve KTF through its dual until the duality gap is at most ``tol``.

    Raises :class:`~ktf.prox.ConvergenceError` if ``max_iters`` is reached
    and ``strict`` is set; otherwise returns with ``converged=False``.
    """
    y, shape = coerce_input(y, shape)
    lam = check_lambda(lam)
    if tol <= 0:
        raise ValueError("tol must be positive")
    pen = KroneckerPenalty(shape, k)
    if lam == 0 or pen.m == 0:
        return FitResult(y.copy(), 0.0, 0, np.zeros(0), np.zeros(0), True, np.zeros(pen.m),
                         gap=0.0, solver="dual reference")

    t0 = time.perf_counter()
    step = 1.0 / operator_norm_sq(shape, k)
    Dsp = None
    u = np.zeros(pen.m)
    v = u.copy()
    t = 1.0
    best_gap, best_u = np.inf, u
    # polishing is skipped while it has cost more time than the gradient steps
    polish_time = 0.0
    f_hist, t_hist, g_hist = [], [], []
    it = 0
    for it in range(1, max_iters + 1):
        theta_v = y - pen.apply_transpose(v)
        u_new = np.clip(v + step * pen.apply(theta_v), -lam, lam)
        if np.dot(v - u_new, u_new - u) > 0:
            t = 1.0
            v = u_new.copy()
        else:
            t_new = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
            v = u_new + ((t - 1) / t_new) * (u_new - u)
            t = t_new
        u = u_new

        if it % 10 == 0 or it == 1:
            gap, theta, Dt = duality_gap(pen, y, u, lam)
            elapsed = time.perf_counter() - t0
            if polish_every and it % polish_every == 0 and polish_time <= elapsed - polish_time:
                tp = time.perf_counter()
                if Dsp is None:
                    Dsp = pen.as_sparse()
                up = _polish(pen, Dsp, y, u, lam)
                polish_time += time.perf_counter() - tp
                gp, thp, Dtp = duality_gap(pen, y, up, lam)
                if gp < gap:
                    gap, theta, Dt, u = gp, thp, Dtp, up
                    v, t = u.copy(), 1.0
            f_hist.append(0.5 * float(np.sum((y - theta) ** 2)) + lam * float(np.abs(Dt).sum()))
            t_hist.append(time.perf_counter() - t0)
            g_hist.append(gap)
            if gap < best_gap:
                best_gap, best_u = gap, u.copy()
            if gap <= tol:
                break

    converged = best_gap <= tol
    if not converged and strict:
        raise ConvergenceError(f"duality gap {best_gap:.3g} above {tol:g} after {max_iters} iterations")
    theta = y - pen.apply_transpose(best_u)
    f = 0.5 * float(np.sum((y - theta) ** 2)) + lam * pen.ktv(theta)
    return FitResult(theta, f, it, np.array(g_hist), np.zeros(len(g_hist)), converged, best_u,
                     np.array(f_hist), np.array(t_hist), gap=best_gap, solver="dual reference")
