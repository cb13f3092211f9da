"""
Initial data, stored target runs and trajectory helpers for the strategy
"""
import logging
from typing import Optional, Tuple

import numpy as np

from ..base import FieldKind
from ..carleman.fixed_point import sobolev_proxy
from ..config import SolverConfig, StrategyConfig
from ..exceptions import ValidationError
from ..geometry.boundary import BoundaryCoefficients, BoundaryNonlinearity
from ..geometry.calculus import stream_velocity
from ..geometry.fields import Field
from ..geometry.grid import Grid2D
from ..solver.navier import BoussinesqSolver
from ..solver.state import FlowState, Trajectory


logger = logging.getLogger(__name__)


def zero_state(grid: Grid2D, t: float = 0.0) -> FlowState:
    return FlowState(t, Field.zeros(grid, FieldKind.VECTOR, t), Field.zeros(grid, FieldKind.SCALAR, t))


def smooth_state(grid: Grid2D, amplitude: float, modes: int = 3, rng: Optional[np.random.Generator] = None,
                 t: float = 0.0) -> FlowState:
    """Sine-series stream function and temperature; random coefficients when rng is given"""
    x, y = grid.coordinates("node")
    xc, yc = grid.coordinates("cell")
    psi = np.zeros_like(x)
    theta = np.zeros_like(xc)
    for kx in range(1, modes + 1):
        for ky in range(1, modes + 1):
            a, b = (rng.standard_normal(2) if rng is not None else np.array([1.0, 0.5])) / (kx * kx + ky * ky)
            psi += a * np.sin(kx * np.pi * x / grid.lx) * np.sin(ky * np.pi * y / grid.ly)
            theta += b * np.cos(kx * np.pi * xc / grid.lx) * np.cos(ky * np.pi * yc / grid.ly)
    u, v = stream_velocity(amplitude * psi, grid)
    return FlowState(t, Field.vector(grid, u, v, t), Field.scalar(grid, amplitude * theta, t))


def initial_state(grid: Grid2D, config: StrategyConfig, seed: Optional[int] = None) -> FlowState:
    if config.initial == "zero":
        return zero_state(grid)
    if config.initial == "random":
        rng = np.random.default_rng(config.seed if seed is None else seed)
        return smooth_state(grid, config.amplitude, config.modes, rng)
    raise ValidationError(f"Unknown initial data: {config.initial}")


def target_run(
    grid: Grid2D,
    coeffs: BoundaryCoefficients,
    config: StrategyConfig,
    solver_config: Optional[SolverConfig] = None,
    nonlinearity: Optional[BoundaryNonlinearity] = None,
) -> Trajectory:
    """Stored uncontrolled run (u_bar, theta_bar) on [0, T]"""
    solver_config = solver_config or SolverConfig()
    if config.target == "zero":
        return Trajectory([zero_state(grid, 0.0), zero_state(grid, config.horizon)])
    if config.target != "smooth":
        raise ValidationError(f"Unknown target: {config.target}")
    start = smooth_state(grid, config.amplitude, config.modes)
    solver = BoussinesqSolver(grid, coeffs, solver_config, epsilon=1.0, nonlinearity=nonlinearity)
    run = solver.run(start, config.horizon, dt=solver_config.dt, output_every=1, record_energy=False)
    logger.info(f"Target run | states={len(run.states)} | final norm={run.final.norm():.4e}")
    return run


def shifted(trajectory: Trajectory, offset: float) -> Trajectory:
    """Same states with t -> t - offset"""
    states = [
        FlowState(s.t - offset, s.u.with_time(s.t - offset), s.theta.with_time(s.t - offset), s.p)
        for s in trajectory.states
    ]
    return Trajectory(states, trajectory.epsilon, diagnostics=trajectory.diagnostics)


def restarted(state: FlowState, t: float) -> FlowState:
    return FlowState(t, state.u.with_time(t), state.theta.with_time(t), state.p)


def deviation(state: FlowState, target: Trajectory) -> FlowState:
    return state.minus(target.at(state.t))


def relative_error(state: FlowState, target: Trajectory, scale: Optional[float] = None) -> Tuple[float, float]:
    """(absolute, relative) L2 distance to the target at the state's time"""
    gap = deviation(state, target).norm()
    reference = target.at(state.t).norm() if scale is None else scale
    return gap, (gap / reference if reference > 0.0 else gap)


def select_time(trajectory: Trajectory, window: Tuple[float, float], target: Optional[Trajectory] = None,
                samples: int = 8) -> Tuple[float, float]:
    """Scan time in the window with the smallest Sobolev proxy (of the deviation when a target is given)"""
    lo, hi = window
    candidates = [s for s in trajectory.states if lo - 1e-12 <= s.t <= hi + 1e-12]
    if not candidates:
        candidates = [trajectory.at(t) for t in np.linspace(lo, hi, samples)]
    elif len(candidates) > samples:
        picks = np.unique(np.linspace(0, len(candidates) - 1, samples).round().astype(int))
        candidates = [candidates[k] for k in picks]
    best_t, best = lo, np.inf
    for state in candidates:
        gap = state if target is None else deviation(state, target)
        value = sobolev_proxy(gap.u, gap.theta)
        if value < best:
            best_t, best = float(state.t), value
    return best_t, float(best)
