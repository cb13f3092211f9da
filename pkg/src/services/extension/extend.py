"""
Extension of initial data from the physical domain to the whole box
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..base import Diagnostics
from ..config import SolverConfig
from ..exceptions import CompatibilityError, ValidationError
from ..geometry.calculus import divergence
from ..geometry.fields import Field
from ..geometry.grid import Box, Grid2D
from ..solver.poisson import PoissonSolver


logger = logging.getLogger(__name__)


@dataclass
class ExtensionResult:
    """Extended velocity, temperature and the divergence source they need"""
    u: Field
    theta: Field
    sigma: Field
    potential: np.ndarray
    fluxes: Dict[str, float] = field(default_factory=dict)
    continuity: float = 0.0
    divergence_residual: float = 0.0
    diagnostics: Diagnostics = field(default_factory=Diagnostics)


def source_shape(grid: Grid2D, region: Optional[Box] = None, order: int = 4) -> np.ndarray:
    """Polynomial bump (1 - r^2)^order on the ellipse inscribed in the region, unit mass"""
    region = region or grid.omega
    x, y = grid.coordinates("cell")
    cx, cy = region.center
    r2 = ((x - cx) / (0.5 * region.width)) ** 2 + ((y - cy) / (0.5 * region.height)) ** 2
    bump = np.where(r2 < 1.0, (1.0 - np.minimum(r2, 1.0)) ** order, 0.0)
    mass = float(np.sum(bump) * grid.cell_area)
    if mass <= 0.0:
        raise ValidationError(f"Control region {region} contains no cell centers")
    return bump / mass


def interface_components(grid: Grid2D) -> List[Tuple[str, np.ndarray]]:
    """Connected pieces of Gamma_c as masks over the u-face column at x = x_gamma"""
    return [("gamma_c", np.ones(grid.ny, dtype=bool))]


def boundary_fluxes(u0: Field) -> Dict[str, float]:
    """Outward flux of u0 through each side of the physical domain"""
    grid = u0.grid
    i = grid.nx_omega
    return {
        "gamma_c": float(np.sum(u0.u[i, :]) * grid.hy),
        "left": float(-np.sum(u0.u[0, :]) * grid.hy),
        "bottom": float(-np.sum(u0.v[:i, 0]) * grid.hx),
        "top": float(np.sum(u0.v[:i, -1]) * grid.hx),
    }


def compatibility_flux(u0: Field, component: Optional[np.ndarray] = None) -> float:
    """Flux of u0 through Gamma_c (or one component of it)"""
    grid = u0.grid
    face = u0.u[grid.nx_omega, :]
    if component is not None:
        face = face[component]
    return float(np.sum(face) * grid.hy)


def _restrict_to_physical(u0: Field, theta0: Field) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    grid = u0.grid
    i = grid.nx_omega
    u = np.zeros(grid.shape("u"))
    v = np.zeros(grid.shape("v"))
    u[: i + 1, :] = u0.u[: i + 1, :]
    v[:i, :] = u0.v[:i, :]
    theta = np.zeros(grid.shape("cell"))
    theta[:i, :] = theta0.values[:i, :]
    return u, v, theta


def extend_state(
    u0: Field,
    theta0: Field,
    config: Optional[SolverConfig] = None,
    tol: float = 1e-8,
) -> ExtensionResult:
    """Extend (u0, theta0) from Omega to O

    Outside the physical domain u_* = grad w where w solves the strip
    Neumann problem Lap w = sigma_* with d w/dx = u0 on Gamma_c; the source
    sigma_* is a fixed bump in the control region carrying minus the flux
    of u0 through Gamma_c. The temperature is extended by zero.
    """
    config = config or SolverConfig()
    grid = u0.grid
    if not grid.same_as(theta0.grid):
        raise ValidationError("Velocity and temperature live on different grids")
    i0 = grid.nx_omega
    diagnostics = Diagnostics()

    u, v, theta = _restrict_to_physical(u0, theta0)
    wall_flux = max(abs(u[0]).max(), abs(v[:i0, 0]).max(), abs(v[:i0, -1]).max())
    if wall_flux > tol * max(u0.max_abs(), 1.0):
        diagnostics.warn(f"u0 is not tangent to the walls of the physical domain | max |u.nu|={wall_flux:.3e}")
        logger.warning(f"⚠️ Initial velocity crosses the physical walls, wall faces are zeroed | max={wall_flux:.3e}")
    u[0, :] = 0.0
    v[:i0, 0] = 0.0
    v[:i0, -1] = 0.0
    inner_div = divergence(u, v, grid)[:i0, :]
    if np.max(np.abs(inner_div)) > tol * max(u0.max_abs(), 1.0) / min(grid.hx, grid.hy):
        diagnostics.warn(f"u0 is not discretely divergence-free on Omega | max={np.max(np.abs(inner_div)):.3e}")

    shape = source_shape(grid)
    sigma = np.zeros(grid.shape("cell"))
    fluxes: Dict[str, float] = {}
    for name, component in interface_components(grid):
        flux = compatibility_flux(u0, component)
        fluxes[name] = flux
        sigma += -flux * shape
    residual = abs(float(np.sum(sigma) * grid.cell_area) + sum(fluxes.values()))
    if residual > tol * max(abs(sum(fluxes.values())), 1.0):
        raise CompatibilityError(
            f"Neumann compatibility fails | residual={residual:.3e}",
            details={"residual": residual, "fluxes": fluxes},
        )

    nxs = grid.nx - i0
    rhs = sigma[i0:, :].copy()
    rhs[0, :] += u[i0, :] / grid.hx
    poisson = PoissonSolver((nxs, grid.ny), grid.hx, grid.hy, config.poisson_tol, config.poisson_maxiter)
    w = poisson.solve(-rhs, "extension")

    u[i0 + 1: grid.nx, :] = (w[1:, :] - w[:-1, :]) / grid.hx
    v[i0:, 1:-1] = (w[:, 1:] - w[:, :-1]) / grid.hy

    u_star = Field.vector(grid, u, v, u0.time)
    sigma_field = Field.scalar(grid, sigma, u0.time)
    residual_div = float(np.max(np.abs(divergence(u, v, grid)[i0:, :] - sigma[i0:, :])))
    norm0 = Field.vector(grid, *_restrict_to_physical(u0, theta0)[:2]).l2_norm()
    continuity = (u_star.l2_norm() + sigma_field.l2_norm()) / norm0 if norm0 > 0 else 0.0

    logger.debug(
        f"Extension | flux={sum(fluxes.values()):.3e} | div residual={residual_div:.2e} | C={continuity:.3f}"
    )
    return ExtensionResult(
        u=u_star,
        theta=Field.scalar(grid, theta, theta0.time),
        sigma=sigma_field,
        potential=w,
        fluxes=fluxes,
        continuity=continuity,
        divergence_residual=residual_div,
        diagnostics=diagnostics,
    )
