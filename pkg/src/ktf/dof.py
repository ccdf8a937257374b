"""Degrees of freedom of a KTF fit: ``nullity(D_{-A})`` with ``A`` the active set.

``dof_from_active`` counts free parameters with the polynomial-piece
spreading procedure: along every axis-aligned line, maximal runs of inactive
penalty rows become pieces on which any null vector must be a degree-k
polynomial; pieces are then visited in order, each contributing the number
of values not already pinned down by earlier pieces, and every piece that
accumulates more than ``k`` known values is itself propagated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lattice import as_shape
from .penalty import KroneckerPenalty


@dataclass(frozen=True)
class ActiveSet:
    """Sorted penalty-row indices with ``|(D theta)_r|`` above threshold."""

    rows: np.ndarray
    tol: float


def active_set(fit, k: int, tol: float = 1e-8, shape=None) -> ActiveSet:
    """Rows with ``|(D theta)_r| > tol * max(1, ||D theta||_inf)``."""
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    fit = np.asarray(fit, dtype=float)
    pen = KroneckerPenalty(shape if shape is not None else fit.shape, k)
    Dt = pen.apply(fit)
    if Dt.size == 0 or np.isinf(tol):
        return ActiveSet(np.zeros(0, dtype=int), tol)
    thr = tol * max(1.0, float(np.abs(Dt).max()))
    return ActiveSet(np.flatnonzero(np.abs(Dt) > thr), tol)


def _line_starts(dims, axis):
    """Flat index of the first site of every line along ``axis`` and the stride."""
    grid = np.arange(int(np.prod(dims))).reshape(dims)
    first = np.take(grid, 0, axis=axis)
    stride = int(np.prod(dims[axis + 1:], dtype=int))
    return first.ravel(), stride


def dof_from_active(shape, k: int, active_rows) -> int:
    """``nullity(D_{-A})`` for the order-(k+1) penalty on ``shape``.

    ``active_rows`` are indices into the stacked penalty rows.
    """
    shape = as_shape(shape)
    pen = KroneckerPenalty(shape, k)
    inactive = np.ones(pen.m, dtype=bool)
    inactive[np.asarray(active_rows, dtype=int)] = False
    blocks = pen.split(inactive.astype(float))
    dims = shape.dims
    n = shape.n

    # piece table: sites of piece p are base[p] + stride[p] * (start[p] .. end[p])
    base, step, start, end = [], [], [], []
    containing = [[] for _ in range(n)]
    for axis, blk in enumerate(blocks):
        N = dims[axis]
        firsts, stride = _line_starts(dims, axis)
        Nrows = blk.shape[axis]
        rows = np.moveaxis(blk, axis, -1).reshape(-1, Nrows) > 0.5 if Nrows else None
        for line, b in enumerate(firsts):
            if Nrows == 0:
                # too short for any difference: the whole line is one piece
                runs = [(0, N - 1)]
            else:
                runs = []
                r = rows[line]
                j = 0
                while j < N:
                    s = j
                    while j < Nrows and r[j]:
                        j += 1
                    if j != s:
                        runs.append((s, j + k))
                    else:
                        runs.append((s, s))
                        j += 1
            for s, e in runs:
                p = len(base)
                base.append(int(b))
                step.append(stride)
                start.append(s)
                end.append(e)
                for t in range(s, e + 1):
                    containing[b + stride * t].append(p)

    npieces = len(base)
    pset = np.zeros(npieces, dtype=bool)
    knowns = np.zeros(npieces, dtype=int)
    vset = np.zeros(n, dtype=bool)
    stack = []

    def spread(p):
        pset[p] = True
        for t in range(start[p], end[p] + 1):
            i = base[p] + step[p] * t
            if not vset[i]:
                vset[i] = True
                stack.append(i)

    df = 0
    for p in range(npieces):
        if pset[p]:
            continue
        length = end[p] - start[p] + 1
        df += max(0, min(length, k + 1) - int(knowns[p]))
        spread(p)
        while stack:
            i = stack.pop()
            for q in containing[i]:
                if pset[q]:
                    continue
                knowns[q] += 1
                if knowns[q] > k:
                    spread(q)
    return df


def dof_estimate(fit, k: int, tol: float = 1e-8, shape=None) -> int:
    """Unbiased degrees-of-freedom estimate ``nullity(D_{-A})`` of a KTF fit."""
    fit = np.asarray(fit, dtype=float)
    shape = as_shape(shape if shape is not None else fit.shape)
    return dof_from_active(shape, k, active_set(fit, k, tol, shape).rows)


def dof_oracle_from_active(shape, k: int, active_rows, rtol: float = 1e-9) -> int:
    """Dense ``n - rank(D_{-A})``; test oracle."""
    shape = as_shape(shape)
    if shape.n > 5000:
        raise ValueError("dense oracle limited to n <= 5000")
    D = KroneckerPenalty(shape, k).as_sparse()
    keep = np.ones(D.shape[0], dtype=bool)
    keep[np.asarray(active_rows, dtype=int)] = False
    A = D[keep].toarray()
    if A.shape[0] == 0:
        return shape.n
    s = np.linalg.svd(A, compute_uv=False)
    return shape.n - int(np.sum(s > rtol * s[0])) if s[0] > 0 else shape.n


def dof_oracle_dense(fit, k: int, tol: float = 1e-8, shape=None) -> int:
    fit = np.asarray(fit, dtype=float)
    shape = as_shape(shape if shape is not None else fit.shape)
    return dof_oracle_from_active(shape, k, active_set(fit, k, tol, shape).rows)


def mad_sigma(y) -> float:
    """Noise level from the median absolute deviation of first differences
    along every axis, pooled; ``MAD / 0.6745 / sqrt(2)``."""
    y = np.asarray(y, dtype=float)
    diffs = [np.diff(y, axis=a).ravel() for a in range(y.ndim) if y.shape[a] > 1]
    if not diffs:
        return 0.0
    v = np.concatenate(diffs)
    return float(np.median(np.abs(v - np.median(v))) / 0.6745 / np.sqrt(2.0))


def risk_proxy(y, theta, df: int, sigma: float) -> float:
    """SURE-style risk proxy ``||y - theta||^2 + 2 sigma^2 df - n sigma^2``."""
    y = np.asarray(y, dtype=float)
    r = y - np.asarray(theta, dtype=float)
    return float(r.ravel() @ r.ravel() + 2.0 * sigma ** 2 * df - y.size * sigma ** 2)
