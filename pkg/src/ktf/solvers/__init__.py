"""Solvers for Kronecker trend filtering."""

from .admm import AdmmConfig, admm_path, admm_type_name, ktf_admm, split_for, z_update
from .common import FitResult, objective
from .linsolve import conjugate_gradient, theta_update_cg, theta_update_dct
from .reference import dual_reference_solve, duality_gap
from .splitting import axis_prox, douglas_rachford, prox_dykstra

__all__ = [
    "AdmmConfig", "FitResult", "admm_path", "admm_type_name", "axis_prox", "conjugate_gradient",
    "douglas_rachford", "dual_reference_solve", "duality_gap", "ktf_admm", "objective",
    "prox_dykstra", "split_for", "theta_update_cg", "theta_update_dct", "z_update",
]
