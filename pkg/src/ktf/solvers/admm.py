"""Specialized ADMM for Kronecker trend filtering.

The penalty is factored as ``D^(k+1) = M D^(j)`` where ``M`` takes
order-(k+1-j) differences along axis-aligned lines. ADMM introduces
``z = D^(j) theta`` and alternates

* theta: ``(I + rho D^(j)T D^(j)) theta = y + rho D^(j)T (z + u)``,
* z: prox of ``(lam / rho) ||M .||_1`` at ``D^(j) theta - u``, one
  univariate trend filtering problem per line,
* u: ``u += z - D^(j) theta``.

``j`` trades a harder linear system against an easier prox: ``j = 0`` has a
diagonal system, ``j = 1`` a DCT-diagonalizable one, larger ``j`` needs CG;
the prox is PDIP for ``k + 1 - j >= 2``, the DP for ``k + 1 - j = 1`` and
soft-thresholding for ``j = k + 1``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from ..lattice import from_lines, to_lines
from ..penalty import KroneckerPenalty, LineBlockOperator
from ..prox import prox_lines
from .common import FitResult, check_lambda, coerce_input
from .linsolve import conjugate_gradient, theta_update_dct


@dataclass(frozen=True)
class AdmmConfig:
    """ADMM settings.

    ``rho0=None`` means ``rho0 = lam``. Residual balancing multiplies or
    divides ``rho`` by ``tau`` when one residual exceeds ``mu`` times the
    other; it is switched off after ``adapt_iters`` iterations so that the
    fixed-``rho`` convergence theory applies to the tail.

    Besides the usual primal and dual residual tests, stopping requires the
    objective excess caused by the split mismatch,
    ``lam ||M (D^(j) theta - z)||_1``, to be at most ``eps_obj`` times the
    objective. The residual tests alone scale with ``||theta||`` and can stop
    early when the optimal objective is small relative to ``||y||``.
    """

    j: int = 1
    rho0: float | None = None
    adaptive: bool = True
    mu: float = 10.0
    tau: float = 2.0
    adapt_iters: int = 2000
    max_iters: int = 5000
    eps_abs: float = 1e-6
    eps_rel: float = 1e-6
    eps_obj: float = 1e-4
    cg_tol: float = 1e-10
    inner_tol: float = 1e-10

    def __post_init__(self):
        for name in ("eps_abs", "eps_rel", "eps_obj", "cg_tol", "inner_tol", "mu"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.tau <= 1:
            raise ValueError("tau must exceed 1")
        if self.rho0 is not None and not self.rho0 > 0:
            raise ValueError("rho0 must be positive")
        if self.j < 0 or self.max_iters < 0:
            raise ValueError("j and max_iters must be nonnegative")


def admm_type_name(j: int, k: int) -> str:
    if j == k + 1:
        return "Type III (soft-threshold)"
    if j == 0:
        return "Type 0"
    if j == 1:
        return "Type I"
    if j == k:
        return "Type II"
    return f"j={j}"


def split_for(kind: str, k: int) -> int:
    """Split index for a type label: ``0``, ``I``, ``II`` or ``III``."""
    table = {"0": 0, "I": 1, "II": k, "III": k + 1}
    if kind not in table:
        raise ValueError(f"unknown ADMM type {kind!r}")
    j = table[kind]
    if j > k + 1:
        raise ValueError(f"type {kind} needs j <= k+1")
    return j


class _Split:
    """The operators and subproblem solvers for one split index."""

    def __init__(self, shape, k, j, cfg):
        self.penalty = KroneckerPenalty(shape, k)
        if shape.uniform:
            self.M, self.inner = self.penalty.decompose(j)
        elif j == k + 1:
            self.inner = self.penalty
            self.M = LineBlockOperator(self.penalty.out_shapes, 0)
        else:
            raise ValueError("uneven designs support only the soft-threshold split j = k+1")
        self.k, self.j, self.cfg = k, j, cfg
        self.order = k + 1 - j
        self.d = shape.d

    def solve_theta(self, y, zu, rho, warm):
        inner = self.inner
        if self.j == 0:
            acc = y.copy()
            for b in inner.split(zu):
                acc += rho * b
            return acc / (1.0 + rho * self.d)
        rhs = y + rho * inner.apply_transpose(zu)
        if self.j == 1:
            return theta_update_dct(rhs, rho)
        x, _, _ = conjugate_gradient(lambda v: v + rho * inner.gram(v), rhs, warm, self.cfg.cg_tol, 2000)
        return x

    def prox(self, w, t):
        """Prox of ``t ||M .||_1`` at ``w``; returns ``(z, nu)`` with ``nu`` in
        the row layout of the full penalty and ``|nu| <= t``."""
        zs, nus = [], []
        for a, blk in enumerate(self.M.split_input(w)):
            if blk.size == 0 or self.M.out_shapes[a][a] == 0:
                zs.append(blk)
                nus.append(np.zeros(self.M.out_shapes[a]))
                continue
            X, U = prox_lines(to_lines(blk, a), t, self.order, self.cfg.inner_tol)
            zs.append(from_lines(X, blk.shape, a))
            nus.append(from_lines(U, self.M.out_shapes[a], a))
        return self.M.stack(zs), self.M.stack(nus)


def z_update(w, k: int, j: int, lambda_over_rho: float, shape, tol: float = 1e-10):
    """Proximal map of ``(lam / rho) ||M^(k+1-j) .||_1`` on a stacked vector in
    the row layout of ``D^(j)``."""
    from ..lattice import as_shape

    sp = _Split(as_shape(shape), k, j, AdmmConfig(j=j, inner_tol=tol))
    return sp.prox(np.asarray(w, dtype=float), lambda_over_rho)[0]


def ktf_admm(y, k: int, lam: float, config: AdmmConfig | None = None, shape=None,
             warm: FitResult | None = None) -> FitResult:
    """Kronecker trend filtering by ADMM on the split ``config.j``.

    Parameters
    ----------
    y : array_like or GridSignal
        Observations on the lattice.
    k : int
        Polynomial degree; the penalty has order ``k + 1``.
    lam : float
        Nonnegative regularization level.
    config : AdmmConfig, optional
    shape : LatticeShape, optional
        Lattice with design points; inferred from ``y`` by default.
    warm : FitResult, optional
        Earlier ADMM fit on the same lattice and split whose ``theta``, ``z``,
        ``u`` and ``rho`` seed this run.
    """
    cfg = config or AdmmConfig()
    y, shape = coerce_input(y, shape)
    lam = check_lambda(lam)
    if k < 0:
        raise ValueError("k must be nonnegative")
    if not cfg.j <= k + 1:
        raise ValueError(f"split index j={cfg.j} exceeds k+1={k + 1}")
    name = f"admm {admm_type_name(cfg.j, k)}"
    sp = _Split(shape, k, cfg.j, cfg)
    pen = sp.penalty
    if lam == 0 or pen.m == 0:
        theta = y.copy()
        return FitResult(theta, 0.0, 0, np.zeros(0), np.zeros(0), True,
                         np.zeros(pen.m), np.zeros(0), np.zeros(0), solver=name)

    inner = sp.inner
    t0 = time.perf_counter()
    if warm is not None and warm.state and warm.state.get("j") == cfg.j:
        theta = warm.theta.copy()
        z = warm.state["z"].copy()
        u = warm.state["u"].copy()
        rho = warm.state["rho"] if cfg.rho0 is None else cfg.rho0
    else:
        theta = y.copy()
        z = inner.apply(theta)
        u = np.zeros_like(z)
        rho = lam if cfg.rho0 is None else cfg.rho0

    sqrt_m = np.sqrt(z.size)
    sqrt_n = np.sqrt(y.size)
    r_hist, s_hist, f_hist, t_hist = [], [], [], []
    best = (np.inf, theta, None)
    nu = np.zeros(pen.m)
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        theta = sp.solve_theta(y, z + u, rho, theta)
        Dt = inner.apply(theta)
        z_old = z
        z, nu = sp.prox(Dt - u, lam / rho)
        u = u + z - Dt
        dual_u = rho * nu

        r = float(np.linalg.norm(z - Dt))
        s = rho * float(np.linalg.norm(inner.apply_transpose(z - z_old)))
        f = 0.5 * float(np.sum((y - theta) ** 2)) + lam * float(np.abs(sp.M.apply(Dt)).sum())
        r_hist.append(r)
        s_hist.append(s)
        f_hist.append(f)
        t_hist.append(time.perf_counter() - t0)
        if f < best[0]:
            best = (f, theta, dual_u)

        eps_pri = sqrt_m * cfg.eps_abs + cfg.eps_rel * max(np.linalg.norm(Dt), np.linalg.norm(z))
        eps_dual = sqrt_n * cfg.eps_abs + cfg.eps_rel * rho * np.linalg.norm(inner.apply_transpose(u))
        if r <= eps_pri and s <= eps_dual and \
                lam * float(np.abs(sp.M.apply(Dt - z)).sum()) <= cfg.eps_obj * f:
            converged = True
            break

        if cfg.adaptive and it <= cfg.adapt_iters:
            if r > cfg.mu * s:
                rho *= cfg.tau
                u /= cfg.tau
            elif s > cfg.mu * r:
                rho /= cfg.tau
                u *= cfg.tau

    if converged:
        f_out, theta_out, u_out = f_hist[-1], theta, dual_u
    else:
        f_out, theta_out, u_out = best
    state = {"j": cfg.j, "z": z, "u": u, "rho": rho}
    return FitResult(theta_out, f_out, it, np.array(r_hist), np.array(s_hist), converged, u_out,
                     np.array(f_hist), np.array(t_hist), solver=name, state=state)


def admm_path(y, k: int, lams, config: AdmmConfig | None = None, shape=None) -> list[FitResult]:
    """Fits over a grid of ``lams`` with warm starts from the previous fit.

    The carried-over ``theta, z, u`` are only a heuristic starting point.
    """
    out, prev = [], None
    for lam in lams:
        prev = ktf_admm(y, k, lam, config, shape, warm=prev)
        out.append(prev)
    return out


def with_split(config: AdmmConfig | None, j: int) -> AdmmConfig:
    return replace(config or AdmmConfig(), j=j)
