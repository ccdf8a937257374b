"""Operator-splitting baselines: proximal Dykstra and Douglas-Rachford.

Both use the axis-wise decomposition ``lam ||D theta||_1 = sum_i r_i(theta)``
where ``r_i`` penalizes order-(k+1) differences along axis i only; the prox
of each ``r_i`` is a batch of univariate trend filtering problems.
"""

from __future__ import annotations

import time

import numpy as np

from ..lattice import from_lines, to_lines
from ..penalty import KroneckerPenalty
from ..prox import prox_lines
from .common import FitResult, check_lambda, coerce_input


def axis_prox(x, axis: int, lam: float, order: int, tol: float = 1e-10):
    """Prox of ``lam ||D_axis x||_1`` (order-``order`` differences along ``axis``)."""
    if x.shape[axis] <= order or lam == 0:
        return x.copy()
    X, _ = prox_lines(to_lines(x, axis), lam, order, tol)
    return from_lines(X, x.shape, axis)


def _fit(pen, y, theta, lam):
    return 0.5 * float(np.sum((y - theta) ** 2)) + lam * pen.ktv(theta)


def prox_dykstra(y, k: int, lam: float, iters: int = 200, tol: float = 1e-10, shape=None,
                 stop_tol: float = 1e-8) -> FitResult:
    """Cyclic proximal Dykstra over the ``d`` axis regularizers.

    One iteration is a full cycle over the axes. At most ``iters`` cycles
    are run; the loop stops once a cycle moves ``theta`` by at most
    ``stop_tol * (1 + ||y||)``.
    """
    y, shape = coerce_input(y, shape)
    lam = check_lambda(lam)
    if not shape.uniform:
        raise ValueError("proximal Dykstra requires a uniform lattice")
    pen = KroneckerPenalty(shape, k)
    d = shape.d
    theta = y.copy()
    z = [np.zeros_like(y) for _ in range(d)]
    stop = stop_tol * (1 + np.linalg.norm(y))
    t0 = time.perf_counter()
    f_hist, t_hist, r_hist, s_hist = [], [], [], []
    for _ in range(iters):
        start = theta
        dz = 0.0
        for i in range(d):
            v = theta + z[i]
            new = axis_prox(v, i, lam, k + 1, tol)
            znew = v - new
            dz += float(np.sum((znew - z[i]) ** 2))
            z[i], theta = znew, new
        f_hist.append(_fit(pen, y, theta, lam))
        t_hist.append(time.perf_counter() - t0)
        r_hist.append(float(np.linalg.norm(theta - start)))
        s_hist.append(np.sqrt(dz))
        if r_hist[-1] <= stop:
            break
    done = bool(r_hist) and r_hist[-1] <= stop
    return FitResult(theta, _fit(pen, y, theta, lam), len(r_hist), np.array(r_hist), np.array(s_hist),
                     done or iters == 0, None, np.array(f_hist), np.array(t_hist), solver="dykstra")


def douglas_rachford(y, k: int, lam: float, iters: int = 200, tol: float = 1e-10,
                     init: FitResult | None = None, shape=None, stop_tol: float = 1e-8) -> FitResult:
    """Douglas-Rachford on the two-block dual split of a 2-d problem.

    With ``F(theta) = 0.5 ||theta - y||^2 + r_1(theta)`` and ``G = r_2`` the
    iteration on ``z`` reads ``theta = prox_F(-z)``, ``s = z + theta``,
    ``z += prox_{G*}(2 s - z) - s``, with ``prox_{G*}`` obtained from
    ``prox_G`` by the Moreau identity. Starting from ``z = -y`` makes
    ``lam = 0`` exact after one step. ``init`` (a fit carrying ``dual_u``)
    starts from the corresponding fixed point ``z = D_2^T u_2 - theta``.
    At most ``iters`` steps are run; the loop stops once a step moves ``z``
    by at most ``stop_tol * (1 + ||y||)``.
    """
    y, shape = coerce_input(y, shape)
    lam = check_lambda(lam)
    if shape.d != 2:
        raise ValueError("Douglas-Rachford is implemented for 2-d lattices only")
    if not shape.uniform:
        raise ValueError("Douglas-Rachford requires a uniform lattice")
    pen = KroneckerPenalty(shape, k)
    order = k + 1
    if init is not None and init.dual_u is not None:
        u2 = pen.split(init.dual_u)[1]
        z = pen.apply_transpose_blocks([np.zeros(pen.out_shapes[0]), u2]) - init.theta
    else:
        z = -y
    stop = stop_tol * (1 + np.linalg.norm(y))
    t0 = time.perf_counter()
    f_hist, t_hist, r_hist = [], [], []
    theta = y.copy()
    for _ in range(iters):
        theta = axis_prox((y - z) / 2, 0, lam / 2, order, tol)
        s = z + theta
        v = 2 * s - z
        step = v - axis_prox(v, 1, lam, order, tol) - s
        z = z + step
        f_hist.append(_fit(pen, y, theta, lam))
        t_hist.append(time.perf_counter() - t0)
        r_hist.append(float(np.linalg.norm(step)))
        if r_hist[-1] <= stop:
            break
    done = bool(r_hist) and r_hist[-1] <= stop
    return FitResult(theta, _fit(pen, y, theta, lam), len(r_hist), np.array(r_hist), np.zeros(len(r_hist)),
                     done or iters == 0, None, np.array(f_hist), np.array(t_hist), solver="douglas-rachford")
