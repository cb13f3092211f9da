"""
Extension of initial data past the controlled interface
"""
from .extend import (
    ExtensionResult,
    boundary_fluxes,
    compatibility_flux,
    extend_state,
    interface_components,
    source_shape,
)

__all__ = [
    "ExtensionResult",
    "boundary_fluxes",
    "compatibility_flux",
    "extend_state",
    "interface_components",
    "source_shape",
]
