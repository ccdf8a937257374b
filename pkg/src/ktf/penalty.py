"""Univariate difference matrices and the matrix-free Kronecker penalty.

Row layout of the stacked penalty: blocks ordered by axis, and inside the
block for axis j the rows follow the C order of an array shaped like the
lattice with axis j shortened to ``N_j - order``. This matches the explicit
Kronecker assembly ``I (x) ... (x) D_j (x) ... (x) I`` under last-axis-fastest
vectorization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from math import comb

import numpy as np
import scipy.sparse as sp

from .lattice import LatticeError, LatticeShape, as_shape, is_uniform_design


@dataclass(frozen=True)
class Diff1d:
    """Banded order-``order`` difference operator on ``N`` points.

    ``rows[r, c]`` is the coefficient of site ``r + c`` in row ``r``.
    """

    N: int
    order: int
    design: np.ndarray
    rows: np.ndarray

    @property
    def m(self) -> int:
        return self.rows.shape[0]

    def matrix(self) -> sp.csr_matrix:
        m, w = self.rows.shape
        if m == 0:
            return sp.csr_matrix((0, self.N))
        r = np.repeat(np.arange(m), w)
        c = (np.arange(m)[:, None] + np.arange(w)[None, :]).ravel()
        return sp.csr_matrix((self.rows.ravel(), (r, c)), shape=(m, self.N))

    def apply(self, x: np.ndarray, axis: int = -1) -> np.ndarray:
        return _apply_axis(self.rows, x, axis)

    def apply_transpose(self, v: np.ndarray, axis: int = -1) -> np.ndarray:
        return _apply_axis_T(self.rows, v, axis, self.N)


def difference_stencil(order: int) -> np.ndarray:
    """Integer coefficients of the order-``order`` forward difference."""
    return np.array([(-1) ** (order - c) * comb(order, c) for c in range(order + 1)], float)


def build_diff_1d(design, order: int) -> Diff1d:
    """Order-``order`` difference operator over the given design points.

    Uniform designs give the pure integer stencil. Uneven designs use the
    recursion ``D^(q+1) = D^(1) diag(q * hbar / (z_{i+q} - z_i)) D^(q)``, where
    ``hbar`` is the mean gap; the normalisation makes the weights exactly 1 on
    a uniform design, so both branches agree there.
    """
    z = np.asarray(design, dtype=float)
    N = z.size
    if order < 0:
        raise ValueError("order must be nonnegative")
    if N > 1 and not np.all(np.diff(z) > 0):
        raise LatticeError("design points must be strictly increasing")
    m = max(N - order, 0)
    if m == 0:
        return Diff1d(N, order, z, np.zeros((0, order + 1)))
    if order == 0 or is_uniform_design(z):
        rows = np.tile(difference_stencil(order), (m, 1))
        return Diff1d(N, order, z, rows)
    hbar = (z[-1] - z[0]) / (N - 1)
    rows = np.tile(difference_stencil(1), (N - 1, 1))
    for q in range(1, order):
        w = q * hbar / (z[q:] - z[:-q])
        scaled = rows * w[:, None]
        nxt = np.zeros((N - q - 1, q + 2))
        nxt[:, 1:] += scaled[1:]
        nxt[:, :-1] -= scaled[:-1]
        rows = nxt
    return Diff1d(N, order, z, rows)


def _axis_slice(ndim, axis, sl):
    idx = [slice(None)] * ndim
    idx[axis] = sl
    return tuple(idx)


def _is_stencil(rows: np.ndarray) -> bool:
    return rows.shape[0] > 0 and np.array_equal(rows, np.broadcast_to(difference_stencil(rows.shape[1] - 1), rows.shape))


def _apply_axis(rows: np.ndarray, x: np.ndarray, axis: int, stencil: bool = False) -> np.ndarray:
    axis = axis % x.ndim
    m, w = rows.shape
    if stencil:
        return np.diff(x, n=w - 1, axis=axis)
    shape = [1] * x.ndim
    shape[axis] = m
    out_shape = list(x.shape)
    out_shape[axis] = m
    out = np.zeros(out_shape)
    if m == 0:
        return out
    for c in range(w):
        out += rows[:, c].reshape(shape) * x[_axis_slice(x.ndim, axis, slice(c, c + m))]
    return out


def _apply_axis_T(rows: np.ndarray, v: np.ndarray, axis: int, N: int) -> np.ndarray:
    axis = axis % v.ndim
    m, w = rows.shape
    shape = [1] * v.ndim
    shape[axis] = m
    out_shape = list(v.shape)
    out_shape[axis] = N
    out = np.zeros(out_shape)
    for c in range(w):
        out[_axis_slice(v.ndim, axis, slice(c, c + m))] += rows[:, c].reshape(shape) * v
    return out


class _StackedAxisOperator:
    """Shared plumbing for operators whose output is a stack of per-axis blocks."""

    in_shapes: list[tuple[int, ...]]
    out_shapes: list[tuple[int, ...]]

    def _finish_layout(self):
        self.block_sizes = [int(np.prod(s)) for s in self.out_shapes]
        self.offsets = np.concatenate([[0], np.cumsum(self.block_sizes)]).astype(int)
        self.m = int(self.offsets[-1])

    def split(self, v: np.ndarray) -> list[np.ndarray]:
        """Cut a stacked vector into per-axis blocks shaped like the output."""
        v = np.asarray(v, dtype=float)
        if v.shape != (self.m,):
            raise ValueError(f"expected a vector of length {self.m}, got shape {v.shape}")
        return [v[a:b].reshape(s) for a, b, s in zip(self.offsets[:-1], self.offsets[1:], self.out_shapes)]

    @staticmethod
    def stack(blocks) -> np.ndarray:
        if not blocks:
            return np.zeros(0)
        return np.concatenate([np.ravel(b) for b in blocks])


class KroneckerPenalty(_StackedAxisOperator):
    """Matrix-free stacked difference operator of order ``k + 1`` on a lattice.

    Axes with ``N_j <= k + 1`` contribute no rows.
    """

    def __init__(self, shape, k: int):
        if k < -1:
            raise ValueError("k must be >= 0")
        self.shape: LatticeShape = as_shape(shape)
        self.k = int(k)
        self.order = self.k + 1
        self.dims = self.shape.dims
        self.n = self.shape.n
        self.d = self.shape.d
        self.diffs = [build_diff_1d(z, self.order) for z in self.shape.designs]
        self._fast = [_is_stencil(D.rows) for D in self.diffs]
        self._grams = None
        self.in_shapes = [self.dims] * self.d
        self.out_shapes = []
        for j, D in enumerate(self.diffs):
            s = list(self.dims)
            s[j] = D.m
            self.out_shapes.append(tuple(s))
        self._finish_layout()

    @classmethod
    def of_order(cls, shape, order: int) -> "KroneckerPenalty":
        """Order-``order`` operator; order 0 stacks ``d`` identities."""
        return cls(shape, order - 1)

    def _as_grid(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape == self.dims:
            return theta
        if theta.shape == (self.n,):
            return theta.reshape(self.dims)
        raise ValueError(f"signal of shape {theta.shape} does not match lattice {self.dims}")

    def apply_blocks(self, theta) -> list[np.ndarray]:
        x = self._as_grid(theta)
        return [_apply_axis(D.rows, x, j, f) for j, (D, f) in enumerate(zip(self.diffs, self._fast))]

    def apply(self, theta) -> np.ndarray:
        return self.stack(self.apply_blocks(theta))

    def apply_transpose_blocks(self, blocks) -> np.ndarray:
        out = np.zeros(self.dims)
        for j, (D, b) in enumerate(zip(self.diffs, blocks)):
            if D.m:
                out += _apply_axis_T(D.rows, b, j, D.N)
        return out

    def apply_transpose(self, v) -> np.ndarray:
        return self.apply_transpose_blocks(self.split(v))

    def gram(self, theta) -> np.ndarray:
        """``D^T D theta`` without forming the stacked vector."""
        x = self._as_grid(theta)
        out = np.zeros(self.dims)
        for j, G in enumerate(self._axis_grams()):
            if G is not None:
                # (before, N_j, after) view; one batched matmul per axis
                a, b = math.prod(self.dims[:j]), math.prod(self.dims[j + 1:])
                out += np.matmul(G, x.reshape(a, self.dims[j], b)).reshape(self.dims)
        return out

    def _axis_grams(self):
        # per-axis N_j x N_j Grams; the full n x n Gram is never formed
        if self._grams is None:
            self._grams = []
            for D in self.diffs:
                Q = D.matrix().toarray()
                self._grams.append(Q.T @ Q if D.m else None)
        return self._grams

    def ktv(self, theta) -> float:
        return float(sum(np.abs(b).sum() for b in self.apply_blocks(theta)))

    def nullity(self) -> int:
        if any(N < self.order for N in self.dims):
            raise LatticeError(
                f"nullity formula needs every side >= k+1 = {self.order}; got {self.dims}"
            )
        return self.order ** self.d

    def max_row_l1(self) -> float:
        """Largest column l1 norm of the assembled penalty."""
        colsum = np.zeros(self.dims)
        for j, D in enumerate(self.diffs):
            if D.m:
                colsum += _apply_axis_T(np.abs(D.rows), np.ones(self.out_shapes[j]), j, D.N)
        return float(colsum.max())

    def as_sparse(self) -> sp.csr_matrix:
        """Explicit Kronecker assembly; intended for dense oracles and tests."""
        blocks = []
        for j, D in enumerate(self.diffs):
            mats = [sp.identity(N, format="csr") for N in self.dims]
            mats[j] = D.matrix()
            M = mats[0]
            for A in mats[1:]:
                M = sp.kron(M, A, format="csr")
            blocks.append(M)
        return sp.vstack(blocks, format="csr")

    def decompose(self, j: int) -> tuple["LineBlockOperator", "KroneckerPenalty"]:
        """Split as ``M^(k+1-j) @ D^(j)``; returns ``(M, inner)``."""
        if not 0 <= j <= self.order:
            raise ValueError(f"split index must lie in [0, {self.order}], got {j}")
        if not self.shape.uniform:
            raise LatticeError("the product factorization requires a uniform lattice")
        inner = KroneckerPenalty.of_order(self.shape, j)
        return LineBlockOperator(inner.out_shapes, self.order - j), inner


class LineBlockOperator(_StackedAxisOperator):
    """Block-diagonal operator applying order-``order`` differences along axis j
    of the j-th input block."""

    def __init__(self, in_shapes, order: int):
        self.in_shapes = [tuple(s) for s in in_shapes]
        self.order = int(order)
        self.rows = []
        self.out_shapes = []
        in_sizes = [int(np.prod(s)) for s in self.in_shapes]
        self.in_offsets = np.concatenate([[0], np.cumsum(in_sizes)]).astype(int)
        self.m_in = int(self.in_offsets[-1])
        for j, s in enumerate(self.in_shapes):
            Nj = s[j]
            m = max(Nj - self.order, 0)
            self.rows.append(np.tile(difference_stencil(self.order), (m, 1)))
            o = list(s)
            o[j] = m
            self.out_shapes.append(tuple(o))
        self._finish_layout()

    def split_input(self, w) -> list[np.ndarray]:
        w = np.asarray(w, dtype=float)
        if w.shape != (self.m_in,):
            raise ValueError(f"expected a vector of length {self.m_in}, got shape {w.shape}")
        o = self.in_offsets
        return [w[o[i]:o[i + 1]].reshape(s) for i, s in enumerate(self.in_shapes)]

    def apply(self, w) -> np.ndarray:
        blocks = self.split_input(w)
        return self.stack([_apply_axis(R, b, j, R.shape[0] > 0) for j, (R, b) in enumerate(zip(self.rows, blocks))])

    def apply_transpose(self, v) -> np.ndarray:
        blocks = self.split(v)
        return self.stack(
            [_apply_axis_T(R, b, j, s[j]) for j, (R, b, s) in enumerate(zip(self.rows, blocks, self.in_shapes))]
        )
