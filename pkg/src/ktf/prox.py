"""Univariate proximal kernels: soft-thresholding, 1-d TV by dynamic
programming, and 1-d trend filtering by a banded primal-dual interior point
method.

The batch entry points take a ``(num_lines, N)`` matrix and solve every row
independently; the ADMM z-update and the splitting methods call them on all
axis-aligned lines of a lattice at once.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from .penalty import build_diff_1d, difference_stencil


class ConvergenceError(RuntimeError):
    """An iterative kernel hit its iteration cap before reaching tolerance."""


@dataclass
class TF1dProblem:
    y: np.ndarray
    lam: float
    order: int
    design: Optional[np.ndarray] = None

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        if self.y.ndim != 1 or self.y.size < 1:
            raise ValueError("y must be a nonempty vector")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.order < 1:
            raise ValueError("order must be >= 1")


def soft_threshold(v, t: float) -> np.ndarray:
    if t < 0:
        raise ValueError("threshold must be nonnegative")
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


# ---------------------------------------------------------------------------
# 1-d total variation: Johnson's linear-time dynamic program.
# ---------------------------------------------------------------------------

@njit(cache=True)
def _tv1d_dp(y, lam, beta):
    n = y.shape[0]
    if n == 1 or lam == 0.0:
        for i in range(n):
            beta[i] = y[i]
        return
    x = np.empty(2 * n)
    a = np.empty(2 * n)
    b = np.empty(2 * n)
    tm = np.empty(n - 1)
    tp = np.empty(n - 1)

    # message for the first site, stepped manually
    tm[0] = -lam + y[0]
    tp[0] = lam + y[0]
    l = n - 1
    r = n
    x[l] = tm[0]
    x[r] = tp[0]
    a[l] = 1.0
    b[l] = -y[0] + lam
    a[r] = -1.0
    b[r] = y[0] + lam
    afirst = 1.0
    bfirst = -lam - y[1]
    alast = -1.0
    blast = -lam + y[1]

    for k in range(1, n - 1):
        alo = afirst
        blo = bfirst
        lo = l
        while lo <= r:
            if alo * x[lo] + blo > -lam:
                break
            alo += a[lo]
            blo += b[lo]
            lo += 1
        ahi = alast
        bhi = blast
        hi = r
        while hi >= lo:
            if -ahi * x[hi] - bhi < lam:
                break
            ahi += a[hi]
            bhi += b[hi]
            hi -= 1
        tm[k] = (-lam - blo) / alo
        l = lo - 1
        x[l] = tm[k]
        tp[k] = (lam + bhi) / (-ahi)
        r = hi + 1
        x[r] = tp[k]
        a[l] = alo
        b[l] = blo + lam
        a[r] = ahi
        b[r] = bhi + lam
        afirst = 1.0
        bfirst = -lam - y[k + 1]
        alast = -1.0
        blast = -lam + y[k + 1]

    # last coefficient: zero of the final derivative
    alo = afirst
    blo = bfirst
    lo = l
    while lo <= r:
        if alo * x[lo] + blo > 0.0:
            break
        alo += a[lo]
        blo += b[lo]
        lo += 1
    beta[n - 1] = -blo / alo
    for k in range(n - 2, -1, -1):
        if beta[k + 1] > tp[k]:
            beta[k] = tp[k]
        elif beta[k + 1] < tm[k]:
            beta[k] = tm[k]
        else:
            beta[k] = beta[k + 1]


@njit(cache=True)
def _tv1d_dp_batch(Y, lam, out):
    for i in range(Y.shape[0]):
        _tv1d_dp(Y[i], lam, out[i])


def tv1d_dp(y, lam: float) -> np.ndarray:
    """Exact minimizer of ``0.5*||y - t||^2 + lam * sum |t[i+1] - t[i]|``."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    y = np.ascontiguousarray(y, dtype=float)
    out = np.empty_like(y)
    if y.size:
        _tv1d_dp(y, float(lam), out)
    return out


def tv1d_dp_batch(Y: np.ndarray, lam: float) -> np.ndarray:
    Y = np.ascontiguousarray(Y, dtype=float)
    out = np.empty_like(Y)
    if Y.size:
        _tv1d_dp_batch(Y, float(lam), out)
    return out


def tv1d_dual(y: np.ndarray, x: np.ndarray, lam: float) -> np.ndarray:
    """Dual vector ``u`` with ``x = y - D^T u`` for first differences, clipped to the box."""
    u = -np.cumsum(y - x, axis=-1)[..., :-1]
    return np.clip(u, -lam, lam)


# ---------------------------------------------------------------------------
# 1-d trend filtering: primal-dual interior point on the dual box QP.
# The Newton matrix D D^T + diag(.) is banded with half-bandwidth q = order;
# it is factored by a banded Cholesky on every step.
# ---------------------------------------------------------------------------

@njit(cache=True)
def _band_gram(rows, G):
    # G[r, s] = (D D^T)[r, r + s], s = 0..q
    m, w = rows.shape
    q = w - 1
    for r in range(m):
        for s in range(q + 1):
            acc = 0.0
            if r + s < m:
                for c in range(s, w):
                    acc += rows[r, c] * rows[r + s, c - s]
            G[r, s] = acc


@njit(cache=True)
def _band_cholesky_solve(G, diag, rhs, L, out):
    # solve (B + diag) x = rhs, B symmetric banded stored as G[r, s] = B[r, r+s]
    m, w = G.shape
    q = w - 1
    # L[i, s] = Lfac[i, i - s]
    for i in range(m):
        for s in range(min(i, q), -1, -1):
            j = i - s
            acc = G[j, s]
            if s == 0:
                acc += diag[i]
            for t in range(1, q + 1):
                # sum over l < j with l >= i - q: Lfac[i, l] * Lfac[j, l]
                l = j - t
                if l < 0 or i - l > q:
                    continue
                acc -= L[i, i - l] * L[j, t]
            if s == 0:
                if acc <= 0.0:
                    acc = 1e-300
                L[i, 0] = np.sqrt(acc)
            else:
                L[i, s] = acc / L[j, 0]
    # forward
    for i in range(m):
        acc = rhs[i]
        for s in range(1, min(i, q) + 1):
            acc -= L[i, s] * out[i - s]
        out[i] = acc / L[i, 0]
    # backward
    for i in range(m - 1, -1, -1):
        acc = out[i]
        for s in range(1, q + 1):
            if i + s < m:
                acc -= L[i + s, s] * out[i + s]
        out[i] = acc / L[i, 0]


@njit(cache=True)
def _D(rows, x, out):
    m, w = rows.shape
    for r in range(m):
        acc = 0.0
        for c in range(w):
            acc += rows[r, c] * x[r + c]
        out[r] = acc


@njit(cache=True)
def _DT(rows, u, out):
    m, w = rows.shape
    for i in range(out.shape[0]):
        out[i] = 0.0
    for r in range(m):
        for c in range(w):
            out[r + c] += rows[r, c] * u[r]


@njit(cache=True)
def _tf1d_pdip(y, rows, lam, tol, maxiter, x_out, z_out):
    """Kim et al. style PDIP for min 0.5||y-x||^2 + lam ||D x||_1.

    Returns the number of Newton iterations, or -1 if the cap was hit.
    """
    ALPHA = 0.01
    BETA = 0.5
    MU = 2.0
    MAXLS = 40
    n = y.shape[0]
    m = rows.shape[0]
    if m == 0 or lam == 0.0:
        for i in range(n):
            x_out[i] = y[i]
        for r in range(m):
            z_out[r] = 0.0
        return 0
    w = rows.shape[1]
    G = np.empty((m, w))
    _band_gram(rows, G)
    L = np.empty((m, w))
    Dy = np.empty(m)
    _D(rows, y, Dy)
    z = np.zeros(m)
    mu1 = np.ones(m)
    mu2 = np.ones(m)
    f1 = np.empty(m)
    f2 = np.empty(m)
    for r in range(m):
        f1[r] = z[r] - lam
        f2[r] = -z[r] - lam
    DTz = np.empty(n)
    DDTz = np.empty(m)
    Dx = np.empty(m)
    diag = np.empty(m)
    rhs = np.empty(m)
    dz = np.empty(m)
    dmu1 = np.empty(m)
    dmu2 = np.empty(m)
    nz = np.empty(m)
    nmu1 = np.empty(m)
    nmu2 = np.empty(m)
    nf1 = np.empty(m)
    nf2 = np.empty(m)
    tmpn = np.empty(n)
    tmpm = np.empty(m)
    t = 1e-10
    step = np.inf
    for it in range(maxiter):
        _DT(rows, z, DTz)
        _D(rows, DTz, DDTz)
        # primal point and gap
        for i in range(n):
            tmpn[i] = y[i] - DTz[i]
        _D(rows, tmpn, Dx)
        quad = 0.0
        for i in range(n):
            quad += DTz[i] * DTz[i]
        l1 = 0.0
        lin = 0.0
        for r in range(m):
            l1 += abs(Dx[r])
            lin += Dy[r] * z[r]
        pobj = 0.5 * quad + lam * l1
        dobj = -0.5 * quad + lin
        gap = pobj - dobj
        if gap <= tol:
            for i in range(n):
                x_out[i] = tmpn[i]
            for r in range(m):
                z_out[r] = z[r]
            return it
        if step >= 0.2:
            t = max(2.0 * m * MU / gap, 1.2 * t)
        # Newton step
        for r in range(m):
            diag[r] = -(mu1[r] / f1[r] + mu2[r] / f2[r])
            rhs[r] = -DDTz[r] + Dy[r] + (1.0 / t) / f1[r] - (1.0 / t) / f2[r]
        _band_cholesky_solve(G, diag, rhs, L, dz)
        for r in range(m):
            dmu1[r] = -(mu1[r] + ((1.0 / t) + dz[r] * mu1[r]) / f1[r])
            dmu2[r] = -(mu2[r] + ((1.0 / t) - dz[r] * mu2[r]) / f2[r])
        # residual norm at the current point
        res = 0.0
        for r in range(m):
            rd = DDTz[r] - Dy[r] + mu1[r] - mu2[r]
            c1 = -mu1[r] * f1[r] - 1.0 / t
            c2 = -mu2[r] * f2[r] - 1.0 / t
            res += rd * rd + c1 * c1 + c2 * c2
        res = np.sqrt(res)
        step = 1.0
        for r in range(m):
            if dmu1[r] < 0.0:
                step = min(step, -0.99 * mu1[r] / dmu1[r])
            if dmu2[r] < 0.0:
                step = min(step, -0.99 * mu2[r] / dmu2[r])
        for ls in range(MAXLS):
            feasible = True
            for r in range(m):
                nz[r] = z[r] + step * dz[r]
                nmu1[r] = mu1[r] + step * dmu1[r]
                nmu2[r] = mu2[r] + step * dmu2[r]
                nf1[r] = nz[r] - lam
                nf2[r] = -nz[r] - lam
                if nf1[r] >= 0.0 or nf2[r] >= 0.0:
                    feasible = False
            if feasible:
                _DT(rows, nz, tmpn)
                _D(rows, tmpn, tmpm)
                nres = 0.0
                for r in range(m):
                    rd = tmpm[r] - Dy[r] + nmu1[r] - nmu2[r]
                    c1 = -nmu1[r] * nf1[r] - 1.0 / t
                    c2 = -nmu2[r] * nf2[r] - 1.0 / t
                    nres += rd * rd + c1 * c1 + c2 * c2
                if np.sqrt(nres) <= (1.0 - ALPHA * step) * res:
                    break
            step *= BETA
        for r in range(m):
            z[r] = nz[r]
            mu1[r] = nmu1[r]
            mu2[r] = nmu2[r]
            f1[r] = nf1[r]
            f2[r] = nf2[r]
    _DT(rows, z, DTz)
    for i in range(n):
        x_out[i] = y[i] - DTz[i]
    for r in range(m):
        z_out[r] = z[r]
    return -1


@njit(cache=True)
def _D_cols(rows, X, out):
    m, w = rows.shape
    nl = X.shape[1]
    for r in range(m):
        for b in range(nl):
            out[r, b] = 0.0
        for c in range(w):
            a = rows[r, c]
            for b in range(nl):
                out[r, b] += a * X[r + c, b]


@njit(cache=True)
def _DT_cols(rows, U, out):
    m, w = rows.shape
    nl = U.shape[1]
    for i in range(out.shape[0]):
        for b in range(nl):
            out[i, b] = 0.0
    for r in range(m):
        for c in range(w):
            a = rows[r, c]
            for b in range(nl):
                out[r + c, b] += a * U[r, b]


@njit(cache=True)
def _band_cholesky_solve_cols(G, diag, rhs, L, acc, out):
    # column-batched version of _band_cholesky_solve; lines are the last axis
    m, w = G.shape
    q = w - 1
    nl = diag.shape[1]
    for i in range(m):
        for s in range(min(i, q), -1, -1):
            j = i - s
            g = G[j, s]
            if s == 0:
                for b in range(nl):
                    acc[b] = g + diag[i, b]
            else:
                for b in range(nl):
                    acc[b] = g
            for t in range(1, q + 1):
                l = j - t
                if l < 0 or i - l > q:
                    continue
                for b in range(nl):
                    acc[b] -= L[i, i - l, b] * L[j, t, b]
            if s == 0:
                for b in range(nl):
                    L[i, 0, b] = np.sqrt(max(acc[b], 1e-300))
            else:
                for b in range(nl):
                    L[i, s, b] = acc[b] / L[j, 0, b]
    for i in range(m):
        for b in range(nl):
            out[i, b] = rhs[i, b]
        for s in range(1, min(i, q) + 1):
            for b in range(nl):
                out[i, b] -= L[i, s, b] * out[i - s, b]
        for b in range(nl):
            out[i, b] /= L[i, 0, b]
    for i in range(m - 1, -1, -1):
        for s in range(1, q + 1):
            if i + s < m:
                for b in range(nl):
                    out[i, b] -= L[i + s, s, b] * out[i + s, b]
        for b in range(nl):
            out[i, b] /= L[i, 0, b]


@njit(cache=True)
def _tf1d_pdip_cols(Y, rows, lam, tol, maxiter, X, Z):
    """Lockstep PDIP on the columns of ``Y`` (shape ``(n, lines)``).

    Same iteration as :func:`_tf1d_pdip`, run for all lines at once so the
    inner loops vectorize across lines. Converged lines are frozen. Returns
    the number of lines that hit the iteration cap.
    """
    ALPHA = 0.01
    BETA = 0.5
    MU = 2.0
    MAXLS = 40
    n, nl = Y.shape
    m = rows.shape[0]
    if m == 0 or lam == 0.0:
        X[:, :] = Y
        Z[:, :] = 0.0
        return 0
    w = rows.shape[1]
    G = np.empty((m, w))
    _band_gram(rows, G)
    L = np.empty((m, w, nl))
    acc = np.empty(nl)
    Dy = np.empty((m, nl))
    _D_cols(rows, Y, Dy)
    z = np.zeros((m, nl))
    mu1 = np.ones((m, nl))
    mu2 = np.ones((m, nl))
    f1 = np.full((m, nl), -lam)
    f2 = np.full((m, nl), -lam)
    DTz = np.empty((n, nl))
    DDTz = np.empty((m, nl))
    Dx = np.empty((m, nl))
    diag = np.empty((m, nl))
    rhs = np.empty((m, nl))
    dz = np.empty((m, nl))
    dmu1 = np.empty((m, nl))
    dmu2 = np.empty((m, nl))
    nz = np.empty((m, nl))
    nmu1 = np.empty((m, nl))
    nmu2 = np.empty((m, nl))
    tmpn = np.empty((n, nl))
    tmpm = np.empty((m, nl))
    t = np.full(nl, 1e-10)
    step = np.full(nl, np.inf)
    res = np.empty(nl)
    nres = np.empty(nl)
    quad = np.empty(nl)
    gap = np.empty(nl)
    done = np.zeros(nl, np.bool_)
    ok = np.zeros(nl, np.bool_)
    remaining = nl
    for it in range(maxiter + 1):
        _DT_cols(rows, z, DTz)
        _D_cols(rows, DTz, DDTz)
        for i in range(n):
            for b in range(nl):
                tmpn[i, b] = Y[i, b] - DTz[i, b]
        _D_cols(rows, tmpn, Dx)
        for b in range(nl):
            quad[b] = 0.0
            gap[b] = 0.0
        for i in range(n):
            for b in range(nl):
                quad[b] += DTz[i, b] * DTz[i, b]
        for r in range(m):
            for b in range(nl):
                gap[b] += lam * abs(Dx[r, b]) - Dy[r, b] * z[r, b]
        for b in range(nl):
            if done[b]:
                continue
            gap[b] += quad[b]
            if gap[b] <= tol:
                done[b] = True
                remaining -= 1
                for i in range(n):
                    X[i, b] = tmpn[i, b]
                for r in range(m):
                    Z[r, b] = z[r, b]
            elif step[b] >= 0.2:
                t[b] = max(2.0 * m * MU / gap[b], 1.2 * t[b])
        if remaining == 0 or it == maxiter:
            break
        for r in range(m):
            for b in range(nl):
                ti = 1.0 / t[b]
                diag[r, b] = -(mu1[r, b] / f1[r, b] + mu2[r, b] / f2[r, b])
                rhs[r, b] = -DDTz[r, b] + Dy[r, b] + ti / f1[r, b] - ti / f2[r, b]
        _band_cholesky_solve_cols(G, diag, rhs, L, acc, dz)
        for b in range(nl):
            res[b] = 0.0
            step[b] = 1.0
        for r in range(m):
            for b in range(nl):
                ti = 1.0 / t[b]
                d1 = -(mu1[r, b] + (ti + dz[r, b] * mu1[r, b]) / f1[r, b])
                d2 = -(mu2[r, b] + (ti - dz[r, b] * mu2[r, b]) / f2[r, b])
                dmu1[r, b] = d1
                dmu2[r, b] = d2
                rd = DDTz[r, b] - Dy[r, b] + mu1[r, b] - mu2[r, b]
                c1 = -mu1[r, b] * f1[r, b] - ti
                c2 = -mu2[r, b] * f2[r, b] - ti
                res[b] += rd * rd + c1 * c1 + c2 * c2
                if d1 < 0.0:
                    step[b] = min(step[b], -0.99 * mu1[r, b] / d1)
                if d2 < 0.0:
                    step[b] = min(step[b], -0.99 * mu2[r, b] / d2)
        for b in range(nl):
            res[b] = np.sqrt(res[b])
            ok[b] = done[b]
        # backtracking in lockstep; accepted lines keep their step
        for ls in range(MAXLS):
            for r in range(m):
                for b in range(nl):
                    s = step[b]
                    nz[r, b] = z[r, b] + s * dz[r, b]
                    nmu1[r, b] = mu1[r, b] + s * dmu1[r, b]
                    nmu2[r, b] = mu2[r, b] + s * dmu2[r, b]
            _DT_cols(rows, nz, tmpn)
            _D_cols(rows, tmpn, tmpm)
            for b in range(nl):
                nres[b] = 0.0
            for r in range(m):
                for b in range(nl):
                    ti = 1.0 / t[b]
                    a1 = nz[r, b] - lam
                    a2 = -nz[r, b] - lam
                    if a1 >= 0.0 or a2 >= 0.0:
                        nres[b] = np.inf
                    rd = tmpm[r, b] - Dy[r, b] + nmu1[r, b] - nmu2[r, b]
                    c1 = -nmu1[r, b] * a1 - ti
                    c2 = -nmu2[r, b] * a2 - ti
                    nres[b] += rd * rd + c1 * c1 + c2 * c2
            left = 0
            for b in range(nl):
                if ok[b]:
                    continue
                if np.sqrt(nres[b]) <= (1.0 - ALPHA * step[b]) * res[b]:
                    ok[b] = True
                else:
                    step[b] *= BETA
                    left += 1
            if left == 0:
                break
        for r in range(m):
            for b in range(nl):
                if done[b]:
                    continue
                s = step[b]
                z[r, b] += s * dz[r, b]
                mu1[r, b] += s * dmu1[r, b]
                mu2[r, b] += s * dmu2[r, b]
                f1[r, b] = z[r, b] - lam
                f2[r, b] = -z[r, b] - lam
    failures = 0
    for b in range(nl):
        if not done[b]:
            failures += 1
            for i in range(n):
                X[i, b] = Y[i, b] - DTz[i, b]
            for r in range(m):
                Z[r, b] = z[r, b]
    return failures


PDIP_MAXITER = 200
# lines solved in lockstep per call of the batched kernel
PDIP_CHUNK = 128


def _rows_for(N: int, order: int, design=None) -> np.ndarray:
    if design is None:
        m = max(N - order, 0)
        return np.ascontiguousarray(np.tile(difference_stencil(order), (m, 1)))
    return np.ascontiguousarray(build_diff_1d(design, order).rows)


def tf1d_pdip(problem: TF1dProblem, tol: float = 1e-10, return_dual: bool = False):
    """Order-``problem.order`` univariate trend filtering with duality gap <= ``tol``.

    Raises :class:`ConvergenceError` if the Newton iteration cap is reached.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    y = np.ascontiguousarray(problem.y)
    rows = _rows_for(y.size, problem.order, problem.design)
    x = np.empty_like(y)
    z = np.empty(rows.shape[0])
    it = _tf1d_pdip(y, rows, float(problem.lam), float(tol), PDIP_MAXITER, x, z)
    if it < 0:
        raise ConvergenceError(f"PDIP did not reach gap {tol:g} in {PDIP_MAXITER} iterations")
    return (x, z) if return_dual else x


def tf1d_pdip_batch(Y: np.ndarray, lam: float, order: int, tol: float = 1e-10,
                    design=None, strict: bool = True):
    """Solve every row of ``Y``; returns ``(X, Z)`` with per-row duals ``Z``."""
    Y = np.ascontiguousarray(Y, dtype=float)
    rows = _rows_for(Y.shape[1], order, design)
    X = np.empty_like(Y)
    Z = np.empty((Y.shape[0], rows.shape[0]))
    failures = 0
    for s in range(0, Y.shape[0], PDIP_CHUNK):
        Yc = np.ascontiguousarray(Y[s:s + PDIP_CHUNK].T)
        Xc = np.empty_like(Yc)
        Zc = np.empty((rows.shape[0], Yc.shape[1]))
        failures += _tf1d_pdip_cols(Yc, rows, float(lam), float(tol), PDIP_MAXITER, Xc, Zc)
        X[s:s + PDIP_CHUNK] = Xc.T
        Z[s:s + PDIP_CHUNK] = Zc.T
    if failures and strict:
        raise ConvergenceError(f"PDIP failed to converge on {failures} of {Y.shape[0]} lines")
    return X, Z


def prox_lines(Y: np.ndarray, lam: float, order: int, tol: float = 1e-10):
    """Order-``order`` trend filtering prox on each row of ``Y`` (uniform design).

    Dispatches to soft-thresholding (order 0), the DP (order 1) or PDIP, and
    returns ``(X, U)`` where ``U`` holds dual vectors with ``X = Y - D^T U``
    and ``|U| <= lam``.
    """
    if order == 0:
        X = soft_threshold(Y, lam)
        return X, np.clip(Y, -lam, lam)
    if order == 1:
        X = tv1d_dp_batch(Y, lam)
        return X, tv1d_dual(Y, X, lam)
    return tf1d_pdip_batch(Y, lam, order, tol)
