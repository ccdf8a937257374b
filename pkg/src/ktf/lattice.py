"""Lattice geometry, index conversion, line iteration and forward differences.

Vectorization convention: a grid signal on a lattice with dims (N_1, ..., N_d)
is stored as a C-ordered array, so the flat index runs over the last axis
fastest. Under this convention the Kronecker block ``A (x) B (x) ... (x) C``
acts with its first factor on axis 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np


class LatticeError(ValueError):
    """Raised for malformed or degenerate lattices."""


@dataclass(frozen=True)
class LatticeShape:
    """Cartesian lattice: per-axis sizes and strictly increasing design points.

    Parameters
    ----------
    dims : sequence of int
        Number of design points along each axis.
    designs : sequence of array-like, optional
        Design points per axis. Defaults to the uniform design ``i / N_j``,
        ``i = 1, ..., N_j``.
    """

    dims: tuple[int, ...]
    designs: tuple[np.ndarray, ...] = field(default=None, compare=False)
    uniform: bool = field(default=True, init=False, compare=False)

    def __post_init__(self):
        dims = tuple(int(N) for N in self.dims)
        if not dims or any(N < 1 for N in dims):
            raise LatticeError(f"dims must be positive integers, got {self.dims}")
        if int(np.prod(dims, dtype=object)) > np.iinfo(np.intp).max:
            raise LatticeError("lattice too large for the platform index range")
        if self.designs is None:
            designs = tuple(np.arange(1, N + 1) / N for N in dims)
            uniform = True
        else:
            if len(self.designs) != len(dims):
                raise LatticeError("need one design per axis")
            designs = []
            for N, z in zip(dims, self.designs):
                z = np.array(z, dtype=float)
                if z.shape != (N,):
                    raise LatticeError(f"design of length {z.size} for axis of size {N}")
                if N > 1 and not np.all(np.diff(z) > 0):
                    raise LatticeError("design points must be strictly increasing")
                z.setflags(write=False)
                designs.append(z)
            designs = tuple(designs)
            uniform = all(is_uniform_design(z) for z in designs)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "designs", designs)
        object.__setattr__(self, "uniform", uniform)

    @property
    def d(self) -> int:
        return len(self.dims)

    @property
    def n(self) -> int:
        return int(np.prod(self.dims))

    def coords(self, axis: int) -> np.ndarray:
        """Design coordinates broadcastable against an array of shape ``dims``."""
        shape = [1] * self.d
        shape[axis] = self.dims[axis]
        return self.designs[axis].reshape(shape)


def is_uniform_design(z: np.ndarray, rtol: float = 1e-10) -> bool:
    if len(z) <= 2:
        return True
    gaps = np.diff(z)
    return bool(np.all(np.abs(gaps - gaps.mean()) <= rtol * abs(gaps.mean())))


def as_shape(shape) -> LatticeShape:
    if isinstance(shape, LatticeShape):
        return shape
    if isinstance(shape, (int, np.integer)):
        return LatticeShape((int(shape),))
    return LatticeShape(tuple(shape))


@dataclass(frozen=True)
class GridSignal:
    """One real value per lattice site, flat in last-axis-fastest order."""

    shape: LatticeShape
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float).ravel()
        if values.size != self.shape.n:
            raise LatticeError(f"expected {self.shape.n} values, got {values.size}")
        if not np.all(np.isfinite(values)):
            raise LatticeError("grid values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_array(cls, array, designs=None) -> "GridSignal":
        array = np.asarray(array, dtype=float)
        return cls(LatticeShape(array.shape, designs), array.ravel())

    def to_array(self) -> np.ndarray:
        return self.values.reshape(self.shape.dims)


def flat_index(shape, idx: Sequence[int]) -> int:
    """Flat position of the 1-based multi-index ``idx`` (last axis fastest)."""
    dims = as_shape(shape).dims
    if len(idx) != len(dims):
        raise IndexError(f"multi-index of length {len(idx)} on a {len(dims)}-d lattice")
    for i, N in zip(idx, dims):
        if not 1 <= i <= N:
            raise IndexError(f"coordinate {i} out of bounds [1, {N}]")
    return int(np.ravel_multi_index(tuple(int(i) - 1 for i in idx), dims))


def multi_index(shape, flat: int) -> tuple[int, ...]:
    """Inverse of :func:`flat_index`; returns 1-based coordinates."""
    dims = as_shape(shape).dims
    if not 0 <= flat < int(np.prod(dims)):
        raise IndexError(f"flat index {flat} out of range")
    return tuple(int(i) + 1 for i in np.unravel_index(int(flat), dims))


def forward_diff(values: np.ndarray, axis: int, order: int) -> np.ndarray:
    """Order-``order`` forward difference along ``axis`` (1-based).

    Sites whose order-``order`` stencil reaches past the end of the lattice
    carry 0, so the output has the same shape as the input.
    """
    values = np.asarray(values, dtype=float)
    if order < 0:
        raise ValueError("order must be nonnegative")
    if not 1 <= axis <= values.ndim:
        raise ValueError(f"axis {axis} invalid for a {values.ndim}-d signal")
    ax = axis - 1
    out = np.zeros_like(values)
    keep = values.shape[ax] - order
    if keep > 0:
        sl = [slice(None)] * values.ndim
        sl[ax] = slice(0, keep)
        out[tuple(sl)] = np.diff(values, n=order, axis=ax)
    return out


def lines(shape, axis: int) -> Iterator[np.ndarray]:
    """Yield the flat indices of every axis-aligned line along ``axis`` (1-based)."""
    dims = as_shape(shape).dims
    if not 1 <= axis <= len(dims):
        raise ValueError(f"axis {axis} invalid for a {len(dims)}-d lattice")
    grid = np.arange(int(np.prod(dims))).reshape(dims)
    grid = np.moveaxis(grid, axis - 1, -1).reshape(-1, dims[axis - 1])
    yield from grid


def to_lines(array: np.ndarray, axis: int) -> np.ndarray:
    """View an array as a (num_lines, N_axis) matrix of lines; ``axis`` is 0-based."""
    moved = np.moveaxis(array, axis, -1)
    return np.ascontiguousarray(moved).reshape(-1, array.shape[axis])


def from_lines(mat: np.ndarray, shape: tuple[int, ...], axis: int) -> np.ndarray:
    """Inverse of :func:`to_lines` for a target array of ``shape``."""
    moved_shape = tuple(s for i, s in enumerate(shape) if i != axis) + (shape[axis],)
    return np.moveaxis(mat.reshape(moved_shape), -1, axis)
