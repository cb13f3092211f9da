"""
Semi-implicit projection solver for the controlled Boussinesq system
"""
import logging
from typing import Dict, Optional, Tuple

import numpy as np

from ..base import TimeStepper
from ..config import SolverConfig
from ..exceptions import CFLViolationError, ConvergenceError, ValidationError, handle_numerical_error
from ..geometry.boundary import BoundaryCoefficients, BoundaryNonlinearity
from ..geometry.fields import Field
from ..geometry.grid import Grid2D
from .helmholtz import HelmholtzSolver
from .operators import (
    BoundaryData,
    Layout,
    advection_blocks,
    buoyancy_block,
    build_ghosts,
    laplacian_blocks,
)
from .poisson import Projector
from .state import EnergyRow, FlowState, ForcingInputs, Trajectory


logger = logging.getLogger(__name__)


class BoussinesqSolver(TimeStepper):
    """Explicit advection, implicit diffusion, pressure projection onto div u = sigma

    Viscosity and diffusivity both equal ``epsilon`` (1 for unscaled runs).
    Navier and Robin conditions enter through ghost factors of the implicit
    Laplacian; nonlinear boundary laws are lagged as explicit data.
    """

    def __init__(
        self,
        grid: Grid2D,
        coeffs: BoundaryCoefficients,
        config: Optional[SolverConfig] = None,
        epsilon: Optional[float] = None,
        nonlinearity: Optional[BoundaryNonlinearity] = None,
        boundary_data: Optional[BoundaryData] = None,
    ):
        self.grid = grid
        self.coeffs = coeffs
        self.config = config or SolverConfig()
        self.epsilon = float(epsilon if epsilon is not None else self.config.epsilon)
        if self.epsilon <= 0:
            raise ValidationError(f"Viscosity must be positive, got {self.epsilon}")
        self.nonlinearity = nonlinearity if nonlinearity is not None and not nonlinearity.is_zero() else None
        self.boundary_data = boundary_data or BoundaryData()
        self.layout = Layout(grid)
        self.projector = Projector(self.layout, self.config.poisson_tol, self.config.poisson_maxiter)
        self.helmholtz = HelmholtzSolver(self.layout)
        self.ghosts = build_ghosts(grid, coeffs, self.boundary_data)
        self.homogeneous_ghosts = build_ghosts(grid, coeffs)
        self.laplacian, self.laplacian_offsets = laplacian_blocks(self.layout, self.ghosts)
        self.buoyancy = buoyancy_block(self.layout)
        self.homogeneous_laplacian, _ = laplacian_blocks(self.layout, self.homogeneous_ghosts)
        self.max_divergence_residual = 0.0
        self.last_diffused: Optional[np.ndarray] = None

    # packing helpers

    def pack(self, u: Field, theta: Field) -> np.ndarray:
        return self.layout.pack(u.u, u.v, theta.values)

    def to_state(self, x: np.ndarray, t: float, phi: Optional[np.ndarray] = None, dt: float = 1.0) -> FlowState:
        u, v, th = self.layout.unpack(x)
        p = None if phi is None else Field.scalar(self.grid, phi.reshape(self.grid.nx, self.grid.ny) / dt, t)
        return FlowState(t, Field.vector(self.grid, u, v, t), Field.scalar(self.grid, th, t), p)

    def cfl_limit(self, x: np.ndarray) -> float:
        umax = float(np.max(np.abs(x[: self.layout.n_vel]))) if self.layout.n_vel else 0.0
        if umax == 0.0:
            return np.inf
        return self.config.cfl * min(self.grid.hx, self.grid.hy) / umax

    def _ghosts_for(self, x: np.ndarray):
        if self.nonlinearity is None:
            return self.ghosts, self.laplacian_offsets
        u, v, th = self.layout.unpack(x)
        navier, robin = self.nonlinearity.boundary_data(Field.vector(self.grid, u, v), Field.scalar(self.grid, th))
        for side, values in self.boundary_data.navier.items():
            navier[side] = navier[side] + values
        for side, values in self.boundary_data.robin.items():
            robin[side] = robin[side] + values
        ghosts = build_ghosts(self.grid, self.coeffs, BoundaryData(navier, robin))
        return ghosts, laplacian_blocks(self.layout, ghosts)[1]

    def forcing_vector(self, forcing: ForcingInputs, t: float) -> np.ndarray:
        vu, vv = forcing.velocity(t, self.grid)
        return self.layout.pack(vu, vv, forcing.temperature(t, self.grid))

    def step(self, x: np.ndarray, t: float, dt: float, forcing: ForcingInputs) -> Tuple[np.ndarray, np.ndarray]:
        """Advance one step; returns the new state vector and the projection potential"""
        limit = self.cfl_limit(x)
        if dt > limit * (1.0 + 1e-12):
            raise CFLViolationError(f"Step rejected | dt={dt:.3e} | limit={limit:.3e}", dt_limit=limit)

        lay = self.layout
        ghosts, lap_off = self._ghosts_for(x)
        rhs = x.copy()
        if self.config.advection:
            u, v, _ = lay.unpack(x)
            adv, adv_off = advection_blocks(lay, ghosts, u, v)
            rhs -= dt * (adv @ x + adv_off)
        if self.config.buoyancy:
            rhs[: lay.n_vel] += dt * (self.buoyancy @ x[lay.sc])
        if not forcing.is_zero():
            rhs += dt * self.forcing_vector(forcing, t)

        c = self.epsilon * dt
        new = self.helmholtz.solve(rhs + c * lap_off, c, c, ghosts)
        self.last_diffused = new.copy()
        sigma = forcing.divergence(t + dt, self.grid)
        new[: lay.n_vel], phi = self.projector.project(new[: lay.n_vel], sigma)
        self.max_divergence_residual = max(self.max_divergence_residual, self.projector.last_residual)
        return new, phi

    def energy_row(self, x_old: np.ndarray, x_new: np.ndarray, phi: np.ndarray, t: float, dt: float,
                   forcing: ForcingInputs) -> EnergyRow:
        lay = self.layout
        w = self.grid.cell_area
        energy = w * float(x_new @ x_new)
        diffused = self.last_diffused if self.last_diffused is not None else x_new
        dissipation = -2.0 * self.epsilon * w * float(diffused @ (self.homogeneous_laplacian @ diffused))
        # explicit sources F enter as |x + dt F|^2 = |x|^2 + dt (2 <x, F> + dt |F|^2)
        source = np.zeros_like(x_old)
        if self.config.buoyancy:
            source[: lay.n_vel] += self.buoyancy @ x_old[lay.sc]
        if not forcing.is_zero():
            source += self.forcing_vector(forcing, t)
        work = w * float(2.0 * (x_old @ source) + dt * (source @ source))
        if not forcing.is_zero():
            sigma = forcing.divergence(t + dt, self.grid)
            if sigma is not None:
                u, v, th = lay.unpack(x_new)
                cu, cv = 0.5 * (u[1:] + u[:-1]), 0.5 * (v[:, 1:] + v[:, :-1])
                pressure = phi.reshape(self.grid.nx, self.grid.ny) / dt
                work += w * float(np.sum(sigma * (cu ** 2 + cv ** 2 + th ** 2)) + 2.0 * np.sum(pressure * sigma))
        return EnergyRow(t=t + dt, dt=dt, energy=energy, dissipation=dissipation, work=work)

    def run(
        self,
        initial: FlowState,
        t_end: float,
        forcing: Optional[ForcingInputs] = None,
        dt: Optional[float] = None,
        output_every: Optional[int] = None,
        record_energy: bool = True,
        divergence_tol: float = 1e-8,
    ) -> Trajectory:
        """March from initial.t to t_end, storing every output_every-th nominal step"""
        forcing = forcing or ForcingInputs.zero()
        dt = float(dt or self.config.dt)
        output_every = output_every or self.config.output_every
        t0 = float(initial.t)
        if t_end <= t0:
            return Trajectory([initial], self.epsilon)

        x = self.pack(initial.u, initial.theta)
        sigma0 = forcing.divergence(t0, self.grid)
        div0 = self.layout.divergence @ x[: self.layout.n_vel]
        target0 = np.zeros_like(div0) if sigma0 is None else np.asarray(sigma0).ravel()
        mismatch = float(np.max(np.abs(div0 - target0))) if div0.size else 0.0
        scale = max(float(np.max(np.abs(target0))), 1.0)
        if mismatch > divergence_tol * scale * max(1.0, 1.0 / min(self.grid.hx, self.grid.hy)):
            raise ValidationError(
                f"Initial divergence does not match the divergence source | mismatch={mismatch:.3e}",
                details={"mismatch": mismatch},
            )

        n_nominal = int(np.ceil((t_end - t0) / dt - 1e-9))
        output_times = list(t0 + dt * output_every * np.arange(1, n_nominal // output_every + 1))
        if not output_times or output_times[-1] < t_end - 1e-12:
            output_times.append(t_end)
        output_times = [min(t, t_end) for t in output_times]
        forcing.verify_support(self.grid, np.linspace(t0, t_end, min(n_nominal + 1, 11)))

        states = [initial]
        ledger = [EnergyRow(t=t0, dt=0.0, energy=self.grid.cell_area * float(x @ x), dissipation=0.0, work=0.0)]
        t = t0
        retries_total = 0
        steps = 0
        self.max_divergence_residual = 0.0
        next_out = 0
        try:
            while t < t_end - 1e-12:
                target = output_times[next_out]
                dt_try = min(dt, target - t)
                retries = 0
                while True:
                    try:
                        new, phi = self.step(x, t, dt_try, forcing)
                        break
                    except CFLViolationError as e:
                        retries += 1
                        if retries > self.config.max_retries:
                            raise CFLViolationError(
                                f"CFL retry cap reached | t={t:.4f} | dt={dt_try:.3e} | limit={e.dt_limit:.3e}",
                                dt_limit=e.dt_limit,
                            )
                        dt_try *= 0.5
                retries_total += retries
                if not np.all(np.isfinite(new)):
                    raise ConvergenceError(f"Non-finite state at t={t + dt_try:.4f}")
                if record_energy:
                    ledger.append(self.energy_row(x, new, phi, t, dt_try, forcing))
                x = new
                t = target if abs(target - (t + dt_try)) < 1e-12 else t + dt_try
                steps += 1
                if abs(t - target) < 1e-12:
                    states.append(self.to_state(x, t, phi, dt_try))
                    next_out += 1
        except (CFLViolationError, ConvergenceError, ValidationError):
            raise
        except Exception as e:
            raise handle_numerical_error(e, "boussinesq_run")

        trajectory = Trajectory(states, self.epsilon, ledger if record_energy else [])
        trajectory.diagnostics.record("steps", steps)
        trajectory.diagnostics.record("cfl_retries", retries_total)
        trajectory.diagnostics.record("max_divergence_residual", self.max_divergence_residual)
        logger.debug(
            f"Run finished | t=[{t0:.3f}, {t_end:.3f}] | steps={steps} | retries={retries_total} | "
            f"div residual={self.max_divergence_residual:.2e}"
        )
        return trajectory


_SOLVER_CACHE: Dict[Tuple, BoussinesqSolver] = {}


def step_nonlinear(state: FlowState, forcing: ForcingInputs, config: SolverConfig,
                   coeffs: BoundaryCoefficients) -> FlowState:
    """One projection step of size config.dt from state"""
    grid = state.grid
    key = (id(grid), id(coeffs), config.epsilon, config.advection, config.buoyancy)
    solver = _SOLVER_CACHE.get(key)
    if solver is None:
        if len(_SOLVER_CACHE) > 8:
            _SOLVER_CACHE.clear()
        solver = BoussinesqSolver(grid, coeffs, config)
        _SOLVER_CACHE[key] = solver
    x = solver.pack(state.u, state.theta)
    new, phi = solver.step(x, state.t, config.dt, forcing)
    return solver.to_state(new, state.t + config.dt, phi, config.dt)
