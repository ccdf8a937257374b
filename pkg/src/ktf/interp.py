"""Off-lattice evaluation of a fitted KTF signal.

The interpolant is the unique function in the tensor product of k-th degree
discrete splines (knots at the interior design points) that matches the
lattice values. Along one axis, its value at ``x`` only involves the ``k+1``
design points next to ``x``: it solves ``f[x_a, ..., x_{a+k}, x] = 0``, i.e.
it is the degree-k polynomial through those points. The multivariate
evaluation reduces axis by axis to ``(k+1)`` problems of one dimension less.
"""

from __future__ import annotations

import math
from bisect import bisect_left

import numpy as np
from scipy.linalg import solve_triangular

from .lattice import LatticeError, as_shape, is_uniform_design


def divided_difference(points, values) -> float:
    """``f[z_1, ..., z_r]`` by the standard recursion."""
    z = np.asarray(points, dtype=float)
    f = np.asarray(values, dtype=float)
    if z.ndim != 1 or z.size < 1 or z.shape != f.shape:
        raise ValueError("need matching nonempty point and value vectors")
    if np.unique(z).size != z.size:
        raise ValueError("points must be distinct")
    table = f.copy()
    for level in range(1, z.size):
        table = (table[1:] - table[:-1]) / (z[level:] - z[:-level])
    return float(table[0])


def divided_difference_weights(points) -> np.ndarray:
    """Coefficients ``c`` with ``f[z_1, ..., z_r] = sum_i c_i f(z_i)``."""
    z = np.asarray(points, dtype=float)
    diff = z[:, None] - z[None, :]
    np.fill_diagonal(diff, 1.0)
    return 1.0 / diff.prod(axis=1)


def _lagrange(nodes, x):
    """Weights ``w`` with ``sum_p w_p g(nodes_p)`` equal to the degree-(len-1)
    interpolating polynomial at ``x``; exact 0/1 weights at a node."""
    m = len(nodes)
    w = [1.0] * m
    for p in range(m):
        num = 1.0
        for q in range(m):
            if q != p:
                num *= (x - nodes[q]) / (nodes[p] - nodes[q])
        w[p] = num
    return w


class _Axis:
    """Design points of one axis with an O(1) locate when evenly spaced."""

    __slots__ = ("z", "zl", "N", "uniform", "z0", "h")

    def __init__(self, z):
        self.z = np.asarray(z, dtype=float)
        self.zl = self.z.tolist()
        self.N = self.z.size
        self.uniform = self.N > 1 and is_uniform_design(self.z)
        self.z0 = self.zl[0]
        self.h = (self.zl[-1] - self.z0) / (self.N - 1) if self.N > 1 else 1.0

    def first_geq(self, x: float) -> int:
        """0-based smallest index with ``x <= z_i``; ``N`` when none."""
        if not self.uniform:
            return bisect_left(self.zl, x)
        zl, N = self.zl, self.N
        i = min(max(math.ceil((x - self.z0) / self.h), 0), N)
        while i > 0 and zl[i - 1] >= x:
            i -= 1
        while i < N and zl[i] < x:
            i += 1
        return i

    def window(self, x: float, k: int) -> int:
        """0-based start of the ``k+1`` design points used at ``x``."""
        return min(max(self.first_geq(x) - k, 0), self.N - k - 1)


def interpolate_1d(design, theta, x: float, k: int) -> float:
    """Value at ``x`` of the k-th degree discrete spline through ``(design, theta)``."""
    ax = design if isinstance(design, _Axis) else _Axis(design)
    if ax.N < k + 1:
        raise LatticeError(f"need at least k+1 = {k + 1} design points")
    x = float(x)
    i = ax.first_geq(x)
    if i < ax.N and ax.zl[i] == x:
        return float(theta[i])
    a = ax.window(x, k)
    w = _lagrange(ax.zl[a:a + k + 1], x)
    return float(sum(wp * float(theta[a + p]) for p, wp in enumerate(w)))


def _interp_rec(axes, theta, x, k):
    if len(axes) == 1:
        return interpolate_1d(axes[0], theta, x[0], k)
    ax = axes[0]
    a = ax.window(x[0], k)
    vals = [_interp_rec(axes[1:], theta[a + p], x[1:], k) for p in range(k + 1)]
    return interpolate_1d(ax.zl[a:a + k + 1], vals, x[0], k)


def _axes_for(shape, k):
    shape = as_shape(shape)
    if any(N < k + 1 for N in shape.dims):
        raise LatticeError(f"every side must be >= k+1 = {k + 1}")
    return [_Axis(z) for z in shape.designs]


def interpolate(shape, theta, x, k: int) -> float:
    """Evaluate the tensor discrete-spline interpolant of ``theta`` at ``x``.

    Lattice points return the stored value exactly; points outside the
    design range along an axis are extrapolated from the boundary window.
    """
    theta = np.asarray(theta, dtype=float)
    shape = as_shape(shape if shape is not None else theta.shape)
    theta = theta.reshape(shape.dims)
    x = [float(v) for v in np.atleast_1d(x)]
    if len(x) != shape.d:
        raise ValueError(f"query of dimension {len(x)} on a {shape.d}-d lattice")
    return _interp_rec(_axes_for(shape, k), theta, x, k)


class Interpolator:
    """Reusable evaluator that caches per-axis design lookups."""

    def __init__(self, shape, theta, k: int):
        theta = np.asarray(theta, dtype=float)
        self.shape = as_shape(shape if shape is not None else theta.shape)
        self.theta = theta.reshape(self.shape.dims)
        self.k = int(k)
        self.axes = _axes_for(self.shape, self.k)

    def __call__(self, x) -> float:
        return _interp_rec(self.axes, self.theta, [float(v) for v in x], self.k)

    def batch(self, X) -> np.ndarray:
        """Vectorized evaluation at the rows of ``X`` (tensor-product weights)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.shape.d:
            raise ValueError("query dimension does not match the lattice")
        k = self.k
        q = X.shape[0]
        starts, weights = [], []
        for j, ax in enumerate(self.axes):
            first = np.searchsorted(ax.z, X[:, j], side="left")
            a = np.clip(first - k, 0, ax.N - k - 1)
            nodes = ax.z[a[:, None] + np.arange(k + 1)]
            W = np.ones((q, k + 1))
            for p in range(k + 1):
                for r in range(k + 1):
                    if r != p:
                        W[:, p] *= (X[:, j] - nodes[:, r]) / (nodes[:, p] - nodes[:, r])
            starts.append(a)
            weights.append(W)
        out = np.zeros(q)
        for offs in np.ndindex(*(k + 1,) * self.shape.d):
            idx = tuple(s + o for s, o in zip(starts, offs))
            w = np.ones(q)
            for W, o in zip(weights, offs):
                w = w * W[:, o]
            out += w * self.theta[idx]
        return out


def interpolate_batch(shape, theta, X, k: int) -> np.ndarray:
    return Interpolator(shape, theta, k).batch(X)


def ffb_eval(i: int, x, design, k: int):
    """Falling factorial basis function ``h_i`` (1-based ``i``) at ``x``."""
    z = np.asarray(design, dtype=float)
    N = z.size
    if not 1 <= i <= N:
        raise IndexError(f"basis index {i} outside [1, {N}]")
    x = np.asarray(x, dtype=float)
    out = np.ones_like(x)
    if i <= k + 1:
        for j in range(i - 1):
            out = out * (x - z[j])
        return out / math.factorial(i - 1)
    for j in range(i - k - 1, i - 1):
        out = out * (x - z[j])
    return out / math.factorial(k) * (x > z[i - 2])


def ffb_matrix(design, k: int, x=None) -> np.ndarray:
    """``H[a, i] = h_i(x_a)``; ``x`` defaults to the design (lower triangular)."""
    z = np.asarray(design, dtype=float)
    x = z if x is None else np.atleast_1d(np.asarray(x, dtype=float))
    return np.stack([ffb_eval(i, x, z, k) for i in range(1, z.size + 1)], axis=-1)


def basis_oracle_eval(shape, theta, x, k: int) -> float:
    """Reference evaluation through the tensor falling factorial expansion.

    Solves ``(H_1 (x) ... (x) H_d) alpha = theta`` axis by axis with
    triangular solves and evaluates ``sum alpha_i prod_j h_{i_j}(x_j)``.
    Intended for tests (``n <= 10^4``).
    """
    theta = np.asarray(theta, dtype=float)
    shape = as_shape(shape if shape is not None else theta.shape)
    if shape.n > 10_000:
        raise ValueError("basis oracle limited to n <= 10^4")
    alpha = theta.reshape(shape.dims).copy()
    for j, z in enumerate(shape.designs):
        H = ffb_matrix(z, k)
        moved = np.moveaxis(alpha, j, 0)
        sol = solve_triangular(H, moved.reshape(z.size, -1), lower=True)
        alpha = np.moveaxis(sol.reshape(moved.shape), 0, j)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    for j, z in enumerate(shape.designs):
        row = ffb_matrix(z, k, x[j])[0]
        alpha = np.tensordot(row, alpha, axes=(0, 0))
    return float(alpha)


def ktv_of_interpolant_k0(shape, theta) -> float:
    """Sum over axis-parallel lattice slices of the total variation of the
    piecewise-constant (k = 0) interpolant, read off by evaluating it at every
    design point and every gap midpoint along the slice."""
    theta = np.asarray(theta, dtype=float)
    shape = as_shape(shape if shape is not None else theta.shape)
    theta = theta.reshape(shape.dims)
    f = Interpolator(shape, theta, 0)
    total = 0.0
    for j, z in enumerate(shape.designs):
        if z.size < 2:
            continue
        t = np.sort(np.concatenate([z, 0.5 * (z[1:] + z[:-1])]))
        others = [range(N) for a, N in enumerate(shape.dims) if a != j]
        for idx in np.ndindex(*[len(r) for r in others]) if others else [()]:
            X = np.empty((t.size, shape.d))
            it = iter(idx)
            for a in range(shape.d):
                X[:, a] = t if a == j else shape.designs[a][next(it)]
            total += float(np.abs(np.diff(f.batch(X))).sum())
    return total
