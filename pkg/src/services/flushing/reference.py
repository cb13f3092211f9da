"""
Potential reference flow that flushes the physical domain
"""
import logging
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np
from scipy import integrate, ndimage

from ..config import FlushingConfig, SolverConfig
from ..exceptions import FlushingError, ValidationError
from ..extension.extend import source_shape
from ..geometry.calculus import face_gradient, faces_to_cells, index_coordinates, node_curl
from ..geometry.grid import Box, Grid2D
from ..solver.poisson import PoissonSolver
from ..solver.state import ForcingInputs


logger = logging.getLogger(__name__)


def _bump(s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = (s > 0.0) & (s < 1.0)
    out[inside] = np.exp(-1.0 / (s[inside] * (1.0 - s[inside])))
    return out


@lru_cache(maxsize=1)
def _profile_table(samples: int = 4001) -> Tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """Unit-mass bump on (0, 1): grid, density, cumulative, normalization"""
    norm, _ = integrate.quad(lambda s: float(_bump(np.array(s))), 0.0, 1.0, limit=200)
    s = np.linspace(0.0, 1.0, samples)
    density = _bump(s) / norm
    cumulative = integrate.cumulative_trapezoid(density, s, initial=0.0)
    cumulative /= cumulative[-1]
    return s, density, cumulative, norm


@dataclass(frozen=True)
class Amplitude:
    """Smooth time amplitude a(t) supported in [t0, t1] with total mass int a"""
    t0: float
    t1: float
    mass: float

    def __post_init__(self):
        if self.t1 <= self.t0:
            raise ValidationError(f"Amplitude support is empty | [{self.t0}, {self.t1}]")
        if self.mass < 0:
            raise ValidationError(f"Amplitude mass must be non-negative, got {self.mass}")

    @property
    def width(self) -> float:
        return self.t1 - self.t0

    def _s(self, t) -> np.ndarray:
        return (np.asarray(t, dtype=float) - self.t0) / self.width

    def __call__(self, t):
        _, _, _, norm = _profile_table()
        value = self.mass * _bump(self._s(t)) / (norm * self.width)
        return float(value) if np.ndim(value) == 0 else value

    def derivative(self, t):
        _, _, _, norm = _profile_table()
        s = self._s(t)
        inside = (s > 0.0) & (s < 1.0)
        safe = np.where(inside, s, 0.5)
        slope = np.where(inside, _bump(s) * (1.0 - 2.0 * safe) / (safe * (1.0 - safe)) ** 2, 0.0)
        value = self.mass * slope / (norm * self.width ** 2)
        return float(value) if np.ndim(value) == 0 else value

    def cumulative(self, t):
        grid, _, cumulative, _ = _profile_table()
        value = self.mass * np.interp(np.clip(self._s(t), 0.0, 1.0), grid, cumulative)
        return float(value) if np.ndim(value) == 0 else value

    def inverse_cumulative(self, tau):
        """First time at which the cumulative amplitude reaches tau (inf if never)"""
        grid, _, cumulative, _ = _profile_table()
        tau = np.asarray(tau, dtype=float)
        if self.mass == 0.0:
            out = np.where(tau <= 0.0, 0.0, np.inf)
        else:
            frac = tau / self.mass
            out = np.where(frac > 1.0, np.inf, self.t0 + self.width * np.interp(np.clip(frac, 0.0, 1.0), cumulative, grid))
            out = np.where(tau <= 0.0, 0.0, out)
        return float(out) if out.ndim == 0 else out

    @property
    def peak(self) -> float:
        _, density, _, _ = _profile_table()
        return self.mass * float(np.max(density)) / self.width

    def mirrored(self, horizon: float) -> "Amplitude":
        return Amplitude(horizon - self.t1, horizon - self.t0, self.mass)


@dataclass
class ReferenceFlow:
    """u0 = a(t) * strength * grad Theta with Lap Theta = source - sink

    Theta carries unit-mass source and sink bumps inside the control strip,
    so u0 is irrotational, tangent to every wall and its divergence sigma0
    lives outside the closed physical domain. Particle paths only depend on
    the cumulative amplitude, which lets flow maps be computed on the
    steady field grad Theta in pseudo-time.
    """
    grid: Grid2D
    horizon: float
    potential: np.ndarray
    shape: np.ndarray
    gradient: Tuple[np.ndarray, np.ndarray]
    amplitude: Amplitude
    strength: float = 1.0
    centers: Tuple[Tuple[float, float], Tuple[float, float]] = ((0.0, 0.0), (0.0, 0.0))
    _coefficients: Optional[Tuple[np.ndarray, np.ndarray]] = field(default=None, repr=False, compare=False)

    @property
    def coefficients(self) -> Tuple[np.ndarray, np.ndarray]:
        if self._coefficients is None:
            gu, gv = self.gradient
            self._coefficients = (
                ndimage.spline_filter(gu, order=3, mode="nearest"),
                ndimage.spline_filter(gv, order=3, mode="nearest"),
            )
        return self._coefficients

    def steady_velocity_at(self, points: np.ndarray) -> np.ndarray:
        """strength * grad Theta at arbitrary points (cubic spline of the face values)"""
        points = np.atleast_2d(points)
        cu, cv = self.coefficients
        su = ndimage.map_coordinates(cu, index_coordinates(self.grid, "u", points), order=3, mode="nearest", prefilter=False)
        sv = ndimage.map_coordinates(cv, index_coordinates(self.grid, "v", points), order=3, mode="nearest", prefilter=False)
        return self.strength * np.stack([su, sv], axis=1)

    def velocity_at(self, t: float, points: np.ndarray) -> np.ndarray:
        return self.amplitude(t) * self.steady_velocity_at(points)

    @property
    def speed_scale(self) -> float:
        gu, gv = self.gradient
        return abs(self.strength) * float(max(np.max(np.abs(gu)), np.max(np.abs(gv))))

    def velocity(self, t: float) -> Tuple[np.ndarray, np.ndarray]:
        factor = self.amplitude(t) * self.strength
        gu, gv = self.gradient
        return factor * gu, factor * gv

    def sigma(self, t: float) -> np.ndarray:
        return self.amplitude(t) * self.strength * self.shape

    def pressure(self, t: float) -> np.ndarray:
        """Bernoulli pressure -a' Theta - |u0|^2 / 2 at cell centers"""
        cu, cv = faces_to_cells(*self.gradient)
        a = self.amplitude(t) * self.strength
        return -self.amplitude.derivative(t) * self.strength * self.potential - 0.5 * a ** 2 * (cu ** 2 + cv ** 2)

    def forcing(self, t: float, viscosity: float = 0.0) -> Tuple[np.ndarray, np.ndarray]:
        """v0 = -viscosity * Lap u0 = -viscosity * grad sigma0"""
        gu, gv = face_gradient(self.sigma(t), self.grid)
        return -viscosity * gu, -viscosity * gv

    def to_forcing(self, viscosity: float = 0.0) -> ForcingInputs:
        velocity = (lambda t: self.forcing(t, viscosity)) if viscosity else None
        return ForcingInputs(v=velocity, sigma=self.sigma)

    def curl_residual(self) -> float:
        return abs(self.strength) * float(np.max(np.abs(node_curl(*self.gradient, self.grid))))

    def normal_trace(self) -> float:
        gu, gv = self.gradient
        walls = np.concatenate([gu[0], gu[-1], gv[:, 0], gv[:, -1]])
        return abs(self.strength) * float(np.max(np.abs(walls)))

    def resolution(self, t0: float, t1: float, cfl: float = 0.5) -> int:
        """RK4 steps keeping particle displacement below cfl cells on [t0, t1]"""
        h = min(self.grid.hx, self.grid.hy)
        travel = abs(self.amplitude.cumulative(t1) - self.amplitude.cumulative(t0)) * self.speed_scale
        peak = self.amplitude.peak * self.speed_scale * abs(t1 - t0)
        return max(int(np.ceil(max(travel, peak) / (cfl * h))), 1)

    def with_amplitude(self, support: Tuple[float, float], mass: Optional[float] = None) -> "ReferenceFlow":
        """Same potential with the amplitude moved to another support (mass kept by default)"""
        amplitude = Amplitude(support[0], support[1], self.amplitude.mass if mass is None else mass)
        return replace(self, amplitude=amplitude, _coefficients=self._coefficients)

    def reversed(self) -> "ReferenceFlow":
        """-u0(T - t): the carrier of the time-reversed construction"""
        return replace(
            self,
            strength=-self.strength,
            amplitude=self.amplitude.mirrored(self.horizon),
            _coefficients=self._coefficients,
        )


def dipole_potential(grid: Grid2D, config: FlushingConfig, tol: float = 1e-10,
                     maxiter: int = 200) -> Tuple[np.ndarray, np.ndarray, Tuple]:
    """Neumann potential of a source above a sink, both centered in the control strip"""
    width = grid.lx - grid.x_gamma
    radius = config.source_radius or 0.3 * min(width, grid.ly)
    xc = 0.5 * (grid.x_gamma + grid.lx)
    y_source = grid.ly * (1.0 - config.source_offset)
    y_sink = grid.ly * config.source_offset
    fits = y_sink - radius > 0.0 and y_source + radius < grid.ly and y_sink + radius < y_source - radius
    if xc - radius <= grid.x_gamma + grid.hx or xc + radius >= grid.lx or not fits:
        raise ValidationError(f"Source radius {radius:.3f} does not fit in the control strip")
    source = source_shape(grid, Box(xc - radius, xc + radius, y_source - radius, y_source + radius))
    sink = source_shape(grid, Box(xc - radius, xc + radius, y_sink - radius, y_sink + radius))
    shape = source - sink
    if np.any(shape[grid.physical_cells] != 0.0):
        raise ValidationError("Source bumps reach the physical domain")
    poisson = PoissonSolver((grid.nx, grid.ny), grid.hx, grid.hy, tol, maxiter)
    potential = poisson.solve(-shape, "reference_potential")
    return potential, shape, ((xc, y_source), (xc, y_sink))


def build_reference_flow(
    grid: Grid2D,
    horizon: Optional[float] = None,
    config: Optional[FlushingConfig] = None,
    strength: float = 1.0,
    mass: Optional[float] = None,
    solver_config: Optional[SolverConfig] = None,
    verify: bool = True,
) -> ReferenceFlow:
    """Build u0 and calibrate the amplitude mass so every particle of Omega leaves in time

    The mass is amplitude_safety times the largest pseudo-time exit of the
    steady field unless given explicitly. Raises FlushingError when the
    flushing check fails.
    """
    from .flowmap import steady_exit_times, verify_flushing

    config = config or FlushingConfig()
    solver_config = solver_config or SolverConfig()
    horizon = float(horizon or config.horizon)
    support = (config.amplitude_support[0] * horizon, config.amplitude_support[1] * horizon)

    potential, shape, centers = dipole_potential(grid, config, solver_config.poisson_tol, solver_config.poisson_maxiter)
    gradient = face_gradient(potential, grid)
    flow = ReferenceFlow(
        grid=grid,
        horizon=horizon,
        potential=potential,
        shape=shape,
        gradient=gradient,
        amplitude=Amplitude(support[0], support[1], 0.0),
        strength=strength,
        centers=centers,
    )
    if mass is None:
        exits = steady_exit_times(flow)
        slowest = float(np.max(exits))
        if not np.isfinite(slowest):
            raise FlushingError("Steady reference flow does not flush every cell of the physical domain")
        mass = config.amplitude_safety * slowest
    flow = flow.with_amplitude(support, mass)

    logger.info(
        f"Reference flow built | strength={strength:g} | mass={mass:.4f} | support=[{support[0]:.3f}, {support[1]:.3f}] | "
        f"curl={flow.curl_residual():.2e}"
    )
    if verify:
        report = verify_flushing(flow)
        if not report.passed:
            raise FlushingError(
                f"Reference flow does not flush Omega before T={horizon:g} | exited={report.exit_fraction:.1%}",
                slowest_trajectory=report.slowest_path,
            )
    return flow
