"""
Picard iteration for local control with nonlinear boundary laws
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..base import Side
from ..config import HUMConfig, SolverConfig
from ..exceptions import NonContractionError, ValidationError
from ..geometry.boundary import BoundaryCoefficients, BoundaryNonlinearity, wall_trace
from ..geometry.fields import Field
from ..solver.linearized import LinearCoefficients, LinearizedSolver
from ..solver.state import FlowState, Trajectory
from .hum import HUMSolution, controlled_trajectory, hum_solve
from .weights import CarlemanWeights


logger = logging.getLogger(__name__)

WallState = Tuple[Dict[Side, np.ndarray], Dict[Side, np.ndarray]]


@dataclass
class FixedPointResult:
    """Controlled trajectory (u, theta) = (ubar + z, thetabar + h) and the last HUM solve"""
    trajectory: Trajectory
    solution: HUMSolution
    iterations: int
    distances: List[float] = field(default_factory=list)
    terminal_norms: List[float] = field(default_factory=list)
    converged: bool = False

    @property
    def terminal_norm(self) -> float:
        return self.terminal_norms[-1] if self.terminal_norms else 0.0


def wall_state(u: Field, theta: Field) -> WallState:
    """Wall velocities (n, 2) and temperatures (n,) per side"""
    cx, cy = u.cell_vectors()
    velocity = {side: np.stack([wall_trace(cx, side), wall_trace(cy, side)], axis=1) for side in Side}
    temperature = {side: wall_trace(theta.values, side) for side in Side}
    return velocity, temperature


def _zero_walls(grid) -> WallState:
    return ({s: np.zeros((grid.side_length(s), 2)) for s in Side},
            {s: np.zeros(grid.side_length(s)) for s in Side})


def sobolev_proxy(u: Field, theta: Field, order: int = 3) -> float:
    """Discrete H^order proxy: root sum of squared difference quotients up to the order"""
    grid = u.grid
    cx, cy = u.cell_vectors()
    total = 0.0
    for values in (cx, cy, np.asarray(theta.values)):
        layer = [values]
        for level in range(order + 1):
            total += grid.cell_area * sum(float(np.sum(d ** 2)) for d in layer)
            if level < order:
                layer = [g for d in layer for g in np.gradient(d, grid.hx, grid.hy)]
    return float(np.sqrt(total))


def check_symmetric_jacobian(nonlinearity: BoundaryNonlinearity, samples: int = 64, scale: float = 1.0,
                             seed: Optional[int] = 0, tol: float = 1e-10) -> float:
    """Largest asymmetry of the Jacobian of f over random wall velocities"""
    rng = np.random.default_rng(seed)
    jac = nonlinearity.jacobian(scale * rng.standard_normal((samples, 2)))
    gap = float(np.max(np.abs(jac - np.swapaxes(jac, -1, -2))))
    if gap > tol:
        raise ValidationError(f"Jacobian of the boundary law is not symmetric (gap {gap:.2e})",
                              details={"gap": gap})
    return gap


def local_fixed_point(
    initial: FlowState,
    coeffs: BoundaryCoefficients,
    nonlinearity: BoundaryNonlinearity,
    weights: CarlemanWeights,
    reference: Optional[Trajectory] = None,
    config: Optional[HUMConfig] = None,
    solver_config: Optional[SolverConfig] = None,
    delta: Optional[float] = None,
    viscosity: float = 1.0,
    convection: bool = True,
) -> FixedPointResult:
    """Drive (u_*, theta_*) onto the reference trajectory (rest by default) in the weight window

    Each pass freezes the boundary increments F, G and, with ``convection``,
    the transport velocity a at the previous iterate, solves the linear
    control problem by HUM and replaces the iterate by the controlled
    state. The iteration stops once two iterates are fixed_point_tol apart
    and the HUM reduction is under fixed_point_terminal_tol. Raises
    NonContractionError when the iterate distance grows three times in a row.
    """
    config = config or HUMConfig()
    grid = initial.grid
    check_symmetric_jacobian(nonlinearity)

    ref0 = reference.at(0.0) if reference is not None else None
    z0 = initial.u if ref0 is None else initial.u - ref0.u
    h0 = initial.theta if ref0 is None else initial.theta - ref0.theta
    distance0 = sobolev_proxy(z0, h0)
    if delta is not None and distance0 > delta:
        raise ValidationError(
            f"Initial data are {distance0:.3e} away from the reference, above delta={delta:.3e}",
            details={"distance": distance0, "delta": delta},
        )

    n = config.time_steps
    dt = weights.horizon / n
    times = np.arange(n + 1) * dt
    kinv = weights.control_weights(n)

    def reference_at(t: float) -> Optional[FlowState]:
        return None if reference is None else reference.at(t)

    base_walls = [wall_state(r.u, r.theta) if r is not None else None for r in map(reference_at, times)]

    iterate: Optional[List[np.ndarray]] = None
    walls: List[WallState] = [_zero_walls(grid)] * (n + 1)
    distances: List[float] = []
    terminal_norms: List[float] = []
    guess = None
    growth = 0
    converged = False
    solver = solution = None

    for k in range(1, config.fixed_point_max_iter + 1):
        def boundary(t: float, _walls=walls) -> BoundaryCoefficients:
            if nonlinearity.is_zero():
                return coeffs
            step = min(int(round(t / dt)), n)
            u_base, t_base = base_walls[step] if base_walls[step] is not None else (None, None)
            friction, heat = nonlinearity.linearized_increments(_walls[step][0], _walls[step][1], u_base, t_base)
            return coeffs.plus(friction, heat)

        def transport(t: float):
            r = reference_at(t)
            return (r.u.u, r.u.v)

        def temperature(t: float):
            return np.asarray(reference_at(t).theta.values)

        def drift(t: float, _iterate=iterate, _solver=solver):
            step = min(int(round(t / dt)), n)
            u, v, _ = _solver.layout.unpack(_iterate[step])
            return u, v

        linear = LinearCoefficients(
            boundary=boundary if not nonlinearity.is_zero() else coeffs,
            a=drift if convection and iterate is not None else None,
            b=transport if reference is not None else None,
            c=temperature if reference is not None else None,
        )
        solver = LinearizedSolver(grid, linear, n, dt, region=grid.omega, viscosity=viscosity, config=solver_config)
        x0 = solver.layout.pack(z0.u, z0.v, h0.values)
        solution = hum_solve(solver, x0, config=config, kappa_inverse=kinv, guess=guess)
        guess = solution.terminal_adjoint
        states = controlled_trajectory(solver, x0, solution.controls)
        terminal_norms.append(solution.terminal_norm)

        if iterate is not None:
            gap = max(np.sqrt(solver.weight * float((a - b) @ (a - b))) for a, b in zip(states, iterate))
            distances.append(float(gap))
            logger.info(f"Fixed point {k} | distance={gap:.3e} | terminal={solution.terminal_norm:.3e}")
            if len(distances) > 1 and distances[-1] > distances[-2]:
                growth += 1
            else:
                growth = 0
            if growth >= 3:
                raise NonContractionError(
                    f"Fixed-point distance grew {growth} times in a row; try a smaller delta",
                    details={"distances": distances, "delta": delta},
                )
        iterate = states

        reached = solution.reduction < config.fixed_point_terminal_tol
        if nonlinearity.is_zero() and not convection:
            converged = reached
            break
        if reached and distances and distances[-1] < config.fixed_point_tol:
            converged = True
            break
        walls = [wall_state(*_fields(solver, x, t)) for x, t in zip(states, times)]

    if not converged:
        logger.warning(
            f"⚠️ Fixed point not converged after {len(terminal_norms)} iterations | distances={distances} | "
            f"reduction={solution.reduction:.3e}"
        )

    out_states = []
    for x, t in zip(iterate, times):
        z = solver.to_state(x, t)
        r = reference_at(t)
        out_states.append(z if r is None else FlowState(t, (z.u + r.u).with_time(t), (z.theta + r.theta).with_time(t)))
    trajectory = Trajectory(out_states, viscosity)
    trajectory.diagnostics.record("fixed_point_iterations", len(terminal_norms))
    trajectory.diagnostics.record("initial_distance", distance0)
    return FixedPointResult(trajectory, solution, len(terminal_norms), distances, terminal_norms, converged)


def _fields(solver: LinearizedSolver, x: np.ndarray, t: float) -> Tuple[Field, Field]:
    state = solver.to_state(x, t)
    return state.u, state.theta
