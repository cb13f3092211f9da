"""
Boundary layer: half-line corrector, dissipation control, technical profiles and decay
"""
from .decay import DecayFit, DecayTimeline, decay_timeline, measure_decay, target_exponent
from .dissipation import DissipationControl, design_dissipation_control, z_modes
from .driver import (
    LayerHistory,
    reference_schedules,
    solve_boundary_layers,
    solve_layer,
    steady_schedules,
)
from .heat import HalfLineStepper, step_layer
from .profile import LayerCoefficients, LayerProfile, layer_coefficients, layer_norm
from .technical import TechnicalProfiles, technical_profiles

__all__ = [
    "DecayFit",
    "DecayTimeline",
    "DissipationControl",
    "HalfLineStepper",
    "LayerCoefficients",
    "LayerHistory",
    "LayerProfile",
    "TechnicalProfiles",
    "decay_timeline",
    "design_dissipation_control",
    "layer_coefficients",
    "layer_norm",
    "measure_decay",
    "reference_schedules",
    "solve_boundary_layers",
    "solve_layer",
    "steady_schedules",
    "step_layer",
    "target_exponent",
    "technical_profiles",
    "z_modes",
]
