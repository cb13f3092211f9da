"""
Carleman weights, HUM controls, Gramian oracle and the local fixed point
"""
from .fixed_point import FixedPointResult, check_symmetric_jacobian, local_fixed_point, sobolev_proxy, wall_state
from .functional import CarlemanIntegrals, carleman_functional, carleman_integrals, scalar_functional
from .gramian import OracleSolution, control_matrix, gramian_oracle
from .hum import HUMSolution, HumIteration, adjoint_controls, controlled_trajectory, hum_control, hum_solve
from .quotient import QuotientReport, carleman_quotient, local_term, observed_functional
from .surrogate import HeatSurrogate1D
from .weights import CarlemanWeights, auto_s, build_eta, build_weights, corner_zone

__all__ = [
    "CarlemanIntegrals",
    "CarlemanWeights",
    "FixedPointResult",
    "HUMSolution",
    "HeatSurrogate1D",
    "HumIteration",
    "OracleSolution",
    "QuotientReport",
    "adjoint_controls",
    "auto_s",
    "build_eta",
    "build_weights",
    "carleman_functional",
    "carleman_integrals",
    "carleman_quotient",
    "check_symmetric_jacobian",
    "control_matrix",
    "controlled_trajectory",
    "corner_zone",
    "gramian_oracle",
    "hum_control",
    "hum_solve",
    "local_fixed_point",
    "local_term",
    "observed_functional",
    "scalar_functional",
    "sobolev_proxy",
    "wall_state",
]
