"""
Linearized forward system and its exact discrete adjoint
"""
import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp

from ..base import LinearControlSystem
from ..config import SolverConfig
from ..exceptions import ValidationError
from ..geometry.boundary import BoundaryCoefficients
from ..geometry.fields import Field
from ..geometry.grid import Box, Grid2D
from .helmholtz import HelmholtzSolver
from .operators import (
    Layout,
    advection_blocks,
    buoyancy_block,
    build_ghosts,
    combine,
    coupling_block,
    laplacian_blocks,
    stretching_block,
)
from .poisson import Projector
from .state import FlowState, ForcingInputs, Trajectory


logger = logging.getLogger(__name__)

MacPair = Tuple[np.ndarray, np.ndarray]
VectorCoefficient = Union[None, MacPair, Callable[[float], MacPair]]
ScalarCoefficient = Union[None, np.ndarray, Callable[[float], np.ndarray]]
BoundaryCoefficient = Union[BoundaryCoefficients, Callable[[float], BoundaryCoefficients]]


def _at(value, t: float):
    return value(t) if callable(value) else value


@dataclass
class LinearCoefficients:
    """Coefficients a, b (MAC velocity fields), c (cells) and boundary matrices A, B

    Each may be constant or a function of time. ``boundary`` carries A as
    its friction matrices and B as its heat-transfer coefficients.
    """
    boundary: BoundaryCoefficient
    a: VectorCoefficient = None
    b: VectorCoefficient = None
    c: ScalarCoefficient = None
    buoyancy: float = 1.0

    def boundary_at(self, t: float) -> BoundaryCoefficients:
        return _at(self.boundary, t)

    def transport_at(self, t: float, grid: Grid2D) -> MacPair:
        """a + b"""
        u = np.zeros(grid.shape("u"))
        v = np.zeros(grid.shape("v"))
        for term in (self.a, self.b):
            value = _at(term, t)
            if value is not None:
                u = u + value[0]
                v = v + value[1]
        return u, v

    def check_bounded(self, grid: Grid2D, times: np.ndarray) -> None:
        for t in times:
            for name, term in (("a", self.a), ("b", self.b)):
                value = _at(term, t)
                if value is not None and not (np.all(np.isfinite(value[0])) and np.all(np.isfinite(value[1]))):
                    raise ValidationError(f"Coefficient {name} is not bounded at t={t:.4f}")
            c = _at(self.c, t)
            if c is not None and not np.all(np.isfinite(c)):
                raise ValidationError(f"Coefficient c is not bounded at t={t:.4f}")


def control_mask(layout: Layout, region: Box) -> np.ndarray:
    """Packed boolean mask of the unknowns lying in the control region"""
    g = layout.grid
    u = g.mask(region, "u")
    v = g.mask(region, "v")
    c = g.mask(region, "cell")
    return layout.pack(u, v, c).astype(bool)


class LinearizedSolver(LinearControlSystem):
    """Uniform steps x^{n+1} = P H^{-1} (x^n + dt (K_n x^n + E c^n))

    P is the symmetric Leray projection, H = I - nu dt L_R with the
    coefficients at t = t0, and K_n collects transport, stretching,
    coupling, buoyancy and the drift of the boundary coefficients away
    from their initial values. E embeds the control unknowns of the
    region. Every factor has an exact transpose, so backpropagate is the
    exact adjoint of propagate.
    """

    def __init__(
        self,
        grid: Grid2D,
        coefficients: LinearCoefficients,
        n_steps: int,
        dt: float,
        region: Optional[Box] = None,
        viscosity: float = 1.0,
        t0: float = 0.0,
        config: Optional[SolverConfig] = None,
    ):
        if n_steps <= 0 or dt <= 0:
            raise ValidationError(f"Need positive step count and step, got {n_steps}, {dt}")
        self.grid = grid
        self.coefficients = coefficients
        self.config = config or SolverConfig()
        self.viscosity = float(viscosity)
        self.t0 = float(t0)
        self._n_steps = int(n_steps)
        self._dt = float(dt)
        self.layout = Layout(grid)
        self.projector = Projector(self.layout, self.config.poisson_tol, self.config.poisson_maxiter)
        self.helmholtz = HelmholtzSolver(self.layout)

        times = self.times()
        coefficients.check_bounded(grid, times[:-1])
        base = coefficients.boundary_at(self.t0)
        self.ghosts = build_ghosts(grid, base)
        self.laplacian, _ = laplacian_blocks(self.layout, self.ghosts)
        self.mask = control_mask(self.layout, region or grid.omega)
        self.control_index = np.flatnonzero(self.mask)
        self.operators: List[sp.csr_matrix] = [self._operator(t, base) for t in times[:-1]]
        self.last_potentials: List[np.ndarray] = []

    @property
    def n_steps(self) -> int:
        return self._n_steps

    @property
    def dt(self) -> float:
        return self._dt

    @property
    def state_size(self) -> int:
        return self.layout.size

    @property
    def control_size(self) -> int:
        return int(self.control_index.size)

    @property
    def weight(self) -> float:
        return self.grid.cell_area

    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.n_steps + 1) * self.dt

    def _operator(self, t: float, base: BoundaryCoefficients) -> sp.csr_matrix:
        lay = self.layout
        coeffs = self.coefficients
        au, av = coeffs.transport_at(t, self.grid)
        adv, _ = advection_blocks(lay, self.ghosts, au, av)
        b = _at(coeffs.b, t)
        velocity = -adv[: lay.n_vel, : lay.n_vel]
        if b is not None:
            velocity = velocity - stretching_block(lay, b[0], b[1])
        c = _at(coeffs.c, t)
        coupling = -coupling_block(lay, c) if c is not None else None
        buoy = coeffs.buoyancy * buoyancy_block(lay) if coeffs.buoyancy else None
        K = combine(lay, velocity, coupling, buoy, -adv[lay.sc, lay.sc])

        current = coeffs.boundary_at(t)
        if current is not base:
            drift, _ = laplacian_blocks(lay, build_ghosts(self.grid, current))
            K = K + self.viscosity * (drift - self.laplacian)
        return K.tocsr()

    def _diffuse(self, y: np.ndarray) -> np.ndarray:
        c = self.viscosity * self.dt
        return self.helmholtz.solve(y, c, c, self.ghosts)

    def _project(self, y: np.ndarray, keep_potential: bool = False) -> np.ndarray:
        out = y.copy()
        nv = self.layout.n_vel
        out[:nv], phi = self.projector.project(y[:nv])
        if keep_potential:
            self.last_potentials.append(phi)
        return out

    def embed(self, control: np.ndarray) -> np.ndarray:
        full = np.zeros(self.state_size)
        full[self.control_index] = control
        return full

    def step(self, x: np.ndarray, n: int, source: Optional[np.ndarray] = None, keep_potential: bool = False) -> np.ndarray:
        y = x + self.dt * (self.operators[n] @ x)
        if source is not None:
            y = y + self.dt * source
        return self._project(self._diffuse(y), keep_potential)

    def adjoint_step(self, lam: np.ndarray, n: int, keep_potential: bool = False) -> Tuple[np.ndarray, np.ndarray]:
        """(lambda^n, mu^n) from lambda^{n+1}"""
        mu = self._diffuse(self._project(lam, keep_potential))
        return mu + self.dt * (self.operators[n].T @ mu), mu

    def propagate(self, x0: np.ndarray, controls: Optional[np.ndarray] = None) -> np.ndarray:
        x = np.asarray(x0, dtype=float).copy()
        for n in range(self.n_steps):
            source = None if controls is None else self.embed(controls[n])
            x = self.step(x, n, source)
        return x

    def propagate_sources(self, x0: np.ndarray, sources: Optional[List[np.ndarray]] = None,
                          keep: bool = True) -> List[np.ndarray]:
        """All states x^0..x^N for full-size sources"""
        self.last_potentials = []
        states = [np.asarray(x0, dtype=float).copy()]
        for n in range(self.n_steps):
            source = None if sources is None else sources[n]
            states.append(self.step(states[-1], n, source, keep_potential=keep))
        return states

    def adjoint_states(self, terminal: np.ndarray, keep: bool = False) -> Tuple[List[np.ndarray], List[np.ndarray]]:
        """Backward sweep; returns lambda^0..lambda^N and mu^0..mu^{N-1}"""
        self.last_potentials = []
        lam = np.asarray(terminal, dtype=float).copy()
        lams = [lam]
        mus: List[np.ndarray] = []
        for n in reversed(range(self.n_steps)):
            lam, mu = self.adjoint_step(lam, n, keep_potential=keep)
            lams.append(lam)
            mus.append(mu)
        lams.reverse()
        mus.reverse()
        return lams, mus

    def backpropagate(self, terminal: np.ndarray) -> np.ndarray:
        _, mus = self.adjoint_states(terminal)
        return self.dt * np.stack([mu[self.control_index] for mu in mus])

    def control_weights(self) -> np.ndarray:
        return np.ones(self.n_steps)

    def duality_residual(self, x0: np.ndarray, sources: List[np.ndarray], terminal: np.ndarray) -> float:
        """Relative mismatch of <x^N, l^N> = <x^0, l^0> + sum dt <s^n, mu^n>"""
        xs = self.propagate_sources(x0, sources, keep=False)
        lams, mus = self.adjoint_states(terminal)
        lhs = float(xs[-1] @ lams[-1])
        rhs = float(xs[0] @ lams[0]) + self.dt * sum(float(s @ m) for s, m in zip(sources, mus))
        scale = max(abs(lhs), abs(rhs), 1e-300)
        return abs(lhs - rhs) / scale

    def to_state(self, x: np.ndarray, t: float, phi: Optional[np.ndarray] = None) -> FlowState:
        u, v, th = self.layout.unpack(x)
        p = None if phi is None else Field.scalar(self.grid, phi.reshape(self.grid.nx, self.grid.ny) / self.dt, t)
        return FlowState(t, Field.vector(self.grid, u, v, t), Field.scalar(self.grid, th, t), p)


def _forcing_sources(solver: LinearizedSolver, forcing: Optional[ForcingInputs]) -> Optional[List[np.ndarray]]:
    if forcing is None or forcing.is_zero():
        return None
    times = solver.times()[:-1]
    forcing.verify_support(solver.grid, times)
    lay = solver.layout
    sources = []
    for t in times:
        vu, vv = forcing.velocity(t, solver.grid)
        sources.append(lay.pack(vu, vv, forcing.temperature(t, solver.grid)))
    return sources


def solve_linearized(
    z0: Field,
    h0: Field,
    coefficients: LinearCoefficients,
    forcing: Optional[ForcingInputs] = None,
    t_end: float = 1.0,
    n_steps: int = 100,
    config: Optional[SolverConfig] = None,
    viscosity: float = 1.0,
) -> Trajectory:
    """Forward linearized trajectory (z, h) from (z0, h0)"""
    solver = LinearizedSolver(z0.grid, coefficients, n_steps, t_end / n_steps, viscosity=viscosity, config=config)
    x0 = solver.layout.pack(z0.u, z0.v, h0.values)
    xs = solver.propagate_sources(x0, _forcing_sources(solver, forcing))
    times = solver.times()
    states = [solver.to_state(xs[0], times[0])]
    states += [solver.to_state(x, t, phi) for x, t, phi in zip(xs[1:], times[1:], solver.last_potentials)]
    return Trajectory(states, viscosity)


def solve_adjoint(
    phi_T: Field,
    psi_T: Field,
    coefficients: LinearCoefficients,
    t_end: float = 1.0,
    n_steps: int = 100,
    config: Optional[SolverConfig] = None,
    viscosity: float = 1.0,
) -> Trajectory:
    """Backward adjoint trajectory (phi, psi, pi), stored in increasing time"""
    solver = LinearizedSolver(phi_T.grid, coefficients, n_steps, t_end / n_steps, viscosity=viscosity, config=config)
    terminal = solver.layout.pack(phi_T.u, phi_T.v, psi_T.values)
    lams, _ = solver.adjoint_states(terminal, keep=True)
    times = solver.times()
    potentials = list(reversed(solver.last_potentials))
    # velocities are reported after projection so phi is divergence-free
    states = [solver.to_state(solver._project(lam), t, phi) for lam, t, phi in zip(lams[:-1], times[:-1], potentials)]
    states.append(solver.to_state(lams[-1], times[-1]))
    return Trajectory(states, viscosity)
