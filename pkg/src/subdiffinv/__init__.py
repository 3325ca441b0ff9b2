"""Reconstruction of a time-dependent potential in semilinear subdiffusion
from the integral of the solution over the domain."""

from subdiffinv.fem import (
    FemSystem,
    Mesh,
    assemble_system,
    build_interval_mesh,
    build_unit_square_mesh,
    integrate_dofs,
    l2_project,
)
from subdiffinv.forward import PotentialGrid, ProblemSpec, TimeGrid, Trajectory, solve_forward
from subdiffinv.frac_cq import cq_caputo, cq_weights, mittag_leffler
from subdiffinv.inverse import InverseConfig, ReconstructionResult, clamp_potential, reconstruct
from subdiffinv.metrics import NormSpec, fit_rate, lp_seq_norm, reconstruction_error
from subdiffinv.observation import ObservationSeries, add_noise, check_admissible, downsample, observe

__all__ = [
    "FemSystem",
    "InverseConfig",
    "Mesh",
    "NormSpec",
    "ObservationSeries",
    "PotentialGrid",
    "ProblemSpec",
    "ReconstructionResult",
    "TimeGrid",
    "Trajectory",
    "add_noise",
    "assemble_system",
    "build_interval_mesh",
    "build_unit_square_mesh",
    "check_admissible",
    "clamp_potential",
    "cq_caputo",
    "cq_weights",
    "downsample",
    "fit_rate",
    "integrate_dofs",
    "l2_project",
    "lp_seq_norm",
    "mittag_leffler",
    "observe",
    "reconstruct",
    "reconstruction_error",
    "solve_forward",
]
