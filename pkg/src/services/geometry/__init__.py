"""
Discrete geometry, operators and norms
"""
from .boundary import BoundaryCoefficients, BoundaryTraces, boundary_operators, normal_flux, wall_trace
from .calculus import discrete_calculus, divergence, face_gradient, laplacian, node_curl, solve_stream, stream_velocity
from .fields import Field, state_norm
from .grid import Box, Grid2D, build_grid
from .norms import KornReport, half_line_grid, korn_audit, korn_constants, weighted_z_norm

__all__ = [
    "Box",
    "BoundaryCoefficients",
    "BoundaryTraces",
    "Field",
    "Grid2D",
    "KornReport",
    "boundary_operators",
    "build_grid",
    "discrete_calculus",
    "divergence",
    "face_gradient",
    "half_line_grid",
    "korn_audit",
    "korn_constants",
    "laplacian",
    "node_curl",
    "normal_flux",
    "solve_stream",
    "state_norm",
    "stream_velocity",
    "wall_trace",
    "weighted_z_norm",
]
