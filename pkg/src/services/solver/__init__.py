"""
Time integration of the controlled Boussinesq system
"""
from .energy import EnergyAudit, energy_audit, mass_drift
from .linearized import LinearCoefficients, LinearizedSolver, solve_adjoint, solve_linearized
from .navier import BoussinesqSolver, step_nonlinear
from .operators import BoundaryData, Layout
from .poisson import PoissonSolver, Projector
from .state import EnergyRow, FlowState, ForcingInputs, Trajectory
from .stokes import StokesLift, lift_field, steady_stokes, stokes_lift

__all__ = [
    "BoundaryData",
    "BoussinesqSolver",
    "EnergyAudit",
    "EnergyRow",
    "FlowState",
    "ForcingInputs",
    "Layout",
    "LinearCoefficients",
    "LinearizedSolver",
    "PoissonSolver",
    "Projector",
    "StokesLift",
    "Trajectory",
    "energy_audit",
    "lift_field",
    "mass_drift",
    "solve_adjoint",
    "solve_linearized",
    "steady_stokes",
    "step_nonlinear",
]
