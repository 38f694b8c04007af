"""Stationary and quasi-stationary densities of noisy expanding circle maps with a sink."""

from .errors import (ContinuityViolation, DegenerateFit, ExpansionViolation, Extinction, GridMismatch,
                     GridTooCoarse, MapValidationError, NoConvergence, PhaseLeak, PlanInvalid, QsdLabError,
                     SingularResolvent, ZeroOperator)
from .experiments import ExperimentPlan, ResultRow, fit_scaling, run_plan
from .grid import Density, Grid, bv_norm, variation
from .maps import MapModel, MapSpec, NoiseModel, Phase, admissibility, build_map, builtin, check_H2, eval_noisy
from .montecarlo import SimConfig, killed_ensemble, simulate_histogram
from .observables import bv_distance, gap_time, lyapunov, lyapunov_gap_prediction
from .operators import UlamOperator, apply, assemble_annealed, assemble_conditioned, assemble_Q, grid_for
from .spectral import diagnostic_norms, q_fixed_point, qsd_eigenpair, reconstruct_rho, stationary_density

__version__ = "0.1.0"

__all__ = [
    "ContinuityViolation", "DegenerateFit", "ExpansionViolation", "Extinction", "GridMismatch", "GridTooCoarse",
    "MapValidationError", "NoConvergence", "PhaseLeak", "PlanInvalid", "QsdLabError", "SingularResolvent",
    "ZeroOperator", "ExperimentPlan", "ResultRow", "fit_scaling", "run_plan", "Density", "Grid", "bv_norm",
    "variation", "MapModel", "MapSpec", "NoiseModel", "Phase", "admissibility", "build_map", "builtin",
    "check_H2", "eval_noisy", "SimConfig", "killed_ensemble", "simulate_histogram", "bv_distance", "gap_time",
    "lyapunov", "lyapunov_gap_prediction", "UlamOperator", "apply", "assemble_annealed", "assemble_conditioned",
    "assemble_Q", "grid_for", "diagnostic_norms", "q_fixed_point", "qsd_eigenpair", "reconstruct_rho",
    "stationary_density",
]
