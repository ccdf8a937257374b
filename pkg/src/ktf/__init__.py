"""Kronecker trend filtering on d-dimensional lattices."""

from .lattice import GridSignal, LatticeError, LatticeShape, flat_index, forward_diff, lines, multi_index
from .penalty import Diff1d, KroneckerPenalty, build_diff_1d

__all__ = [
    "Diff1d",
    "GridSignal",
    "KroneckerPenalty",
    "LatticeError",
    "LatticeShape",
    "build_diff_1d",
    "flat_index",
    "forward_diff",
    "lines",
    "multi_index",
]

__version__ = "0.1.0"
