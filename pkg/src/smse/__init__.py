"""Finite-difference solver and estimate certifier for the singular minimal
surface equation

    div(Du / sqrt(1 + |Du|^2)) = alpha / (u sqrt(1 + |Du|^2)),   alpha < 0,

with Dirichlet data on planar domains.
"""

from .discretization import ScalarField, assemble_jacobian, assemble_residual
from .geometry import DomainSpec, Grid, build_grid, domain_from_dict
from .radial import PhysicsParams, RadialProfile, fit_radial_dirichlet, integrate_profile
from .solver import ContinuationOptions, ContinuationTrace, continuation_solve, newton_solve
from .verify import BarrierSpec, EstimateReport, build_barrier, certify

__version__ = "0.1.0"

__all__ = [
    "BarrierSpec", "ContinuationOptions", "ContinuationTrace", "DomainSpec", "EstimateReport",
    "Grid", "PhysicsParams", "RadialProfile", "ScalarField", "assemble_jacobian",
    "assemble_residual", "build_barrier", "build_grid", "certify", "continuation_solve",
    "domain_from_dict", "fit_radial_dirichlet", "integrate_profile", "newton_solve",
]
