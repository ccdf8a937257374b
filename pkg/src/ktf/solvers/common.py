"""Result container and objective shared by every KTF solver."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..lattice import GridSignal, LatticeShape, as_shape
from ..penalty import KroneckerPenalty


@dataclass(frozen=True)
class FitResult:
    """Output of a KTF solver.

    Attributes
    ----------
    theta : ndarray
        Fitted signal, shaped like the lattice.
    objective : float
        ``0.5 ||y - theta||^2 + lam * ktv(theta)`` at ``theta``.
    iters : int
        Iterations (ADMM steps, APG steps, or full splitting cycles).
    primal_residuals, dual_residuals : ndarray
        Per-iteration residual norms.
    converged : bool
        Whether the stopping rule fired before the iteration cap.
    dual_u : ndarray or None
        Dual vector in the row layout of the order-(k+1) penalty, with
        ``theta = y - D^T u`` at optimality and ``|u| <= lam``.
    """

    theta: np.ndarray
    objective: float
    iters: int
    primal_residuals: np.ndarray
    dual_residuals: np.ndarray
    converged: bool
    dual_u: Optional[np.ndarray] = None
    objectives: np.ndarray = field(default_factory=lambda: np.zeros(0))
    times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    gap: Optional[float] = None
    solver: str = ""
    state: Optional[dict] = field(default=None, repr=False, compare=False)

    @property
    def signal(self) -> GridSignal:
        return GridSignal(LatticeShape(self.theta.shape), self.theta.ravel())


def coerce_input(y, shape=None):
    """Return ``(array, LatticeShape)`` from an array or a :class:`GridSignal`."""
    if isinstance(y, GridSignal):
        return y.to_array().astype(float), y.shape
    y = np.array(y, dtype=float)
    if y.ndim == 0:
        raise ValueError("y must have at least one axis")
    if not np.all(np.isfinite(y)):
        raise ValueError("y must be finite")
    shape = as_shape(shape if shape is not None else y.shape)
    if shape.dims != y.shape:
        if y.size != shape.n:
            raise ValueError(f"y of shape {y.shape} does not match lattice {shape.dims}")
        y = y.reshape(shape.dims)
    return y, shape


def check_lambda(lam: float) -> float:
    lam = float(lam)
    if not np.isfinite(lam) or lam < 0:
        raise ValueError("lambda must be a finite nonnegative number")
    return lam


def objective(y, theta, k: int, lam: float, shape=None) -> float:
    """``0.5 ||y - theta||^2 + lam * ||D^(k+1) theta||_1``."""
    y, shape = coerce_input(y, shape)
    theta = np.asarray(theta, dtype=float).reshape(shape.dims)
    fit = 0.5 * float(np.sum((y - theta) ** 2))
    return fit + lam * KroneckerPenalty(shape, k).ktv(theta) if lam else fit
