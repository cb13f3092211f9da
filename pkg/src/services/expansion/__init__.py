"""
Asymptotic expansion in eps: scaling, assembly, remainder forcing, remainder solve and rates
"""
from .assemble import ExpansionTerms, assemble_expansion, expansion_terms, remainder_of, seam_mismatch
from .bundle import REQUIRED_PROFILES, ExpansionBundle
from .forcing import RemainderForcing, amplify, amplify_temperature, remainder_boundary_data, remainder_forcing
from .rates import RateFit, claimed_rate, rate_fit
from .remainder import (
    GronwallLedger,
    RemainderRun,
    cross_check,
    expansion_controls,
    nonlinear_remainder,
    remainder_norms,
    side_mismatch,
    solve_remainder,
    structural_residual,
    sum_forcing,
    tracking_forcing,
)
from .scaling import SCALING_EXPONENTS, scale_factor, scale_forcing, scale_state, scale_trajectory, scaled_time
from .trace import LayerSampler, directional_derivative, s_derivative, z_derivative

__all__ = [
    "REQUIRED_PROFILES",
    "SCALING_EXPONENTS",
    "ExpansionBundle",
    "ExpansionTerms",
    "GronwallLedger",
    "LayerSampler",
    "RateFit",
    "RemainderForcing",
    "RemainderRun",
    "amplify",
    "amplify_temperature",
    "assemble_expansion",
    "claimed_rate",
    "cross_check",
    "directional_derivative",
    "expansion_controls",
    "expansion_terms",
    "nonlinear_remainder",
    "rate_fit",
    "remainder_boundary_data",
    "remainder_forcing",
    "remainder_norms",
    "remainder_of",
    "s_derivative",
    "scale_factor",
    "scale_forcing",
    "scale_state",
    "scale_trajectory",
    "scaled_time",
    "seam_mismatch",
    "side_mismatch",
    "solve_remainder",
    "structural_residual",
    "sum_forcing",
    "tracking_forcing",
    "z_derivative",
]
