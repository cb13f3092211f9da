"""
Stokes lift of a divergence source and the steady Stokes oracle
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from ..config import SolverConfig
from ..exceptions import ConvergenceError
from ..geometry.boundary import BoundaryCoefficients, velocity_gradient_cells
from ..geometry.fields import Field
from ..geometry.grid import Grid2D
from .navier import BoussinesqSolver
from .operators import Layout, build_ghosts, laplacian_blocks
from .poisson import PoissonSolver, Projector
from .state import FlowState, ForcingInputs


logger = logging.getLogger(__name__)


def regularity_proxy(u: Field) -> float:
    """max |u| + max |grad u| over the cells"""
    cx, cy, grad = velocity_gradient_cells(u)
    return float(max(np.max(np.abs(cx)), np.max(np.abs(cy))) + np.max(np.abs(grad)))


@dataclass
class StokesLift:
    """Time-sampled lift u_sigma, p_sigma"""
    times: np.ndarray
    velocity: List[Field]
    pressure: List[Optional[Field]]
    divergence_residual: float = 0.0
    regularity: List[float] = field(default_factory=list)

    def velocity_at(self, t: float) -> Field:
        if t <= self.times[0]:
            return self.velocity[0]
        if t >= self.times[-1]:
            return self.velocity[-1]
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        w = (t - self.times[k]) / (self.times[k + 1] - self.times[k])
        return (self.velocity[k] * (1.0 - w) + self.velocity[k + 1] * w).with_time(t)

    @property
    def max_regularity(self) -> float:
        return max(self.regularity) if self.regularity else 0.0


def lift_field(grid: Grid2D, sigma: np.ndarray, config: Optional[SolverConfig] = None) -> Field:
    """Gradient field with divergence sigma and zero normal component"""
    config = config or SolverConfig()
    layout = Layout(grid)
    projector = Projector(layout, config.poisson_tol, config.poisson_maxiter)
    u, v = layout.unpack_velocity(projector.lift(sigma))
    return Field.vector(grid, u, v)


def stokes_lift(
    sigma: Callable[[float], np.ndarray],
    grid: Grid2D,
    coeffs: BoundaryCoefficients,
    t_end: float,
    config: Optional[SolverConfig] = None,
    viscosity: float = 1.0,
    output_every: int = 1,
) -> StokesLift:
    """March u_t - nu Lap u + grad p = 0, div u = sigma(t) with Navier walls from the initial lift"""
    config = replace(config or SolverConfig(), advection=False, buoyancy=False, epsilon=viscosity)
    solver = BoussinesqSolver(grid, coeffs, config)
    u0 = lift_field(grid, sigma(0.0), config)
    theta0 = Field.scalar(grid, np.zeros(grid.shape("cell")))
    forcing = ForcingInputs(sigma=sigma)
    trajectory = solver.run(FlowState(0.0, u0, theta0), t_end, forcing, output_every=output_every, record_energy=False)
    velocity = [s.u for s in trajectory.states]
    result = StokesLift(
        times=trajectory.times,
        velocity=velocity,
        pressure=[s.p for s in trajectory.states],
        divergence_residual=trajectory.diagnostics.values.get("max_divergence_residual", 0.0),
        regularity=[regularity_proxy(u) for u in velocity],
    )
    logger.info(
        f"Stokes lift | steps={trajectory.diagnostics.values.get('steps', 0):.0f} | "
        f"div residual={result.divergence_residual:.2e} | W1inf proxy={result.max_regularity:.3e}"
    )
    return result


def steady_stokes(
    sigma: np.ndarray,
    grid: Grid2D,
    coeffs: BoundaryCoefficients,
    viscosity: float = 1.0,
    tol: float = 1e-10,
    maxiter: int = 5000,
) -> Tuple[Field, Field]:
    """Solve -nu Lap u + grad p = 0, div u = sigma with Navier walls

    The velocity is the Neumann lift plus a divergence-free correction
    found by CG on the projected Laplacian.
    """
    layout = Layout(grid)
    projector = Projector(layout, min(tol, 1e-12), 400)
    lap, _ = laplacian_blocks(layout, build_ghosts(grid, coeffs))
    nv = layout.n_vel
    lap_v = lap[:nv, :nv]
    base = projector.lift(sigma)

    def apply(w: np.ndarray) -> np.ndarray:
        return -projector.apply(lap_v @ projector.apply(w))

    rhs = projector.apply(lap_v @ base)
    operator = LinearOperator((nv, nv), matvec=apply, dtype=float)
    if np.linalg.norm(rhs) == 0.0:
        w = np.zeros(nv)
    else:
        w, info = cg(operator, rhs, rtol=tol, maxiter=maxiter)
        residual = float(np.linalg.norm(apply(w) - rhs) / np.linalg.norm(rhs))
        if info != 0 and residual > 10.0 * tol:
            raise ConvergenceError(f"Steady Stokes CG did not converge | residual={residual:.3e}", residual=residual)
    xu = base + projector.apply(w)
    poisson = PoissonSolver((grid.nx, grid.ny), grid.hx, grid.hy, tol)
    p = poisson.solve(-viscosity * (layout.divergence @ (lap_v @ xu)), "steady_pressure")
    u, v = layout.unpack_velocity(xu)
    return Field.vector(grid, u, v), Field.scalar(grid, p)
