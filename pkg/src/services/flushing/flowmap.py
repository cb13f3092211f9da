"""
Particle flow maps and the flushing check
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol, Tuple

import numpy as np

from ..base import Diagnostics
from ..config import FlushingConfig
from ..geometry.grid import Grid2D


logger = logging.getLogger(__name__)

VelocityField = Callable[[np.ndarray], np.ndarray]


class CarrierFlow(Protocol):
    """Anything that can report a velocity at (t, points)"""
    grid: Grid2D
    horizon: float

    def velocity_at(self, t: float, points: np.ndarray) -> np.ndarray:
        ...


def clamp(points: np.ndarray, grid: Grid2D) -> Tuple[np.ndarray, np.ndarray]:
    """Project points back into the closed box; returns (points, was_outside)"""
    lo = np.array([0.0, 0.0])
    hi = np.array([grid.lx, grid.ly])
    outside = np.any((points < lo) | (points > hi), axis=1)
    return np.clip(points, lo, hi), outside


def _rk4(velocity: VelocityField, x: np.ndarray, step: np.ndarray) -> np.ndarray:
    k1 = velocity(x)
    k2 = velocity(x + 0.5 * step * k1)
    k3 = velocity(x + 0.5 * step * k2)
    k4 = velocity(x + step * k3)
    return x + step * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0


def integrate_steady(
    velocity: VelocityField,
    grid: Grid2D,
    points: np.ndarray,
    tau: float,
    cfl: float = 0.25,
    max_iter: int = 100000,
) -> Tuple[np.ndarray, np.ndarray]:
    """Advance points along a steady field by pseudo-time tau (negative goes backward)

    Each particle takes RK4 steps sized to move at most cfl cells, so slow
    and fast particles share one vectorized loop.
    """
    x = np.array(points, dtype=float, copy=True).reshape(-1, 2)
    flagged = np.zeros(len(x), dtype=bool)
    if tau == 0.0 or len(x) == 0:
        return x, flagged
    direction = np.sign(tau)
    remaining = np.full(len(x), abs(float(tau)))
    h = min(grid.hx, grid.hy)
    for _ in range(max_iter):
        active = remaining > 0.0
        if not np.any(active):
            break
        xa = x[active]
        speed = np.linalg.norm(velocity(xa), axis=1)
        step = np.minimum(remaining[active], cfl * h / np.maximum(speed, 1e-300))
        moved, outside = clamp(_rk4(lambda p: direction * velocity(p), xa, step[:, None]), grid)
        x[active] = moved
        flagged[np.flatnonzero(active)[outside]] = True
        remaining[active] = remaining[active] - step
        remaining[remaining < 1e-15 * abs(tau)] = 0.0
    else:
        logger.warning(f"⚠️ Steady integration hit the iteration cap | pending={int(np.sum(remaining > 0))}")
    if np.any(flagged):
        logger.warning(f"⚠️ {int(flagged.sum())} trajectories left the box and were clamped")
    return x, flagged


def flow_map(flow: CarrierFlow, s: float, t: float, points: np.ndarray, n_steps: Optional[int] = None) -> np.ndarray:
    """Phi(s; t, x): position at time s of the particle sitting at x at time t"""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if s == t:
        return points.copy()
    steady = getattr(flow, "steady_velocity_at", None)
    amplitude = getattr(flow, "amplitude", None)
    if steady is not None and amplitude is not None:
        tau = amplitude.cumulative(s) - amplitude.cumulative(t)
        return integrate_steady(steady, flow.grid, points, tau)[0]

    n_steps = n_steps or 200
    dt = (s - t) / n_steps
    x = points.copy()
    for k in range(n_steps):
        tk = t + k * dt
        k1 = flow.velocity_at(tk, x)
        k2 = flow.velocity_at(tk + 0.5 * dt, x + 0.5 * dt * k1)
        k3 = flow.velocity_at(tk + 0.5 * dt, x + 0.5 * dt * k2)
        k4 = flow.velocity_at(tk + dt, x + dt * k3)
        x, outside = clamp(x + dt * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0, flow.grid)
        if np.any(outside):
            logger.debug(f"Clamped {int(outside.sum())} trajectories at t={tk + dt:.4f}")
    return x


def trace(flow: CarrierFlow, times: np.ndarray, points: np.ndarray, substeps: int = 4) -> np.ndarray:
    """Positions (len(times), n, 2) of particles seeded at times[0]"""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    path = np.empty((len(times),) + points.shape)
    path[0] = points
    for k in range(1, len(times)):
        path[k] = flow_map(flow, times[k], times[k - 1], path[k - 1], n_steps=substeps)
    return path


def steady_exit_times(
    flow,
    seeds: Optional[np.ndarray] = None,
    cfl: float = 0.25,
    tau_max: float = 1e6,
    max_iter: int = 20000,
) -> np.ndarray:
    """Pseudo-time each seed needs under the steady field to cross x = x_gamma"""
    grid = flow.grid
    seeds = default_seeds(grid) if seeds is None else np.atleast_2d(seeds)
    x = seeds.astype(float).copy()
    tau = np.zeros(len(x))
    exit_tau = np.where(x[:, 0] > grid.x_gamma, 0.0, np.inf)
    active = ~np.isfinite(exit_tau)
    h = min(grid.hx, grid.hy)
    velocity = flow.steady_velocity_at
    for _ in range(max_iter):
        if not np.any(active):
            break
        idx = np.flatnonzero(active)
        xa = x[idx]
        speed = np.linalg.norm(velocity(xa), axis=1)
        stalled = speed < 1e-14
        if np.any(stalled):
            active[idx[stalled]] = False
            idx, xa, speed = idx[~stalled], xa[~stalled], speed[~stalled]
        step = cfl * h / speed
        moved, _ = clamp(_rk4(velocity, xa, step[:, None]), grid)
        crossed = moved[:, 0] > grid.x_gamma
        frac = np.where(crossed, (grid.x_gamma - xa[:, 0]) / np.maximum(moved[:, 0] - xa[:, 0], 1e-300), 1.0)
        exit_tau[idx[crossed]] = tau[idx[crossed]] + np.clip(frac[crossed], 0.0, 1.0) * step[crossed]
        x[idx] = moved
        tau[idx] += step
        active[idx[crossed]] = False
        active[idx[tau[idx] > tau_max]] = False
    return exit_tau


def default_seeds(grid: Grid2D) -> np.ndarray:
    """One particle per cell center of the closed physical domain"""
    x, y = grid.coordinates("cell")
    mask = grid.physical_cells
    return np.stack([x[mask], y[mask]], axis=1)


@dataclass
class FlushingReport:
    """Exit times of the seeds and the slowest trajectory"""
    seeds: np.ndarray
    exit_times: np.ndarray
    horizon: float
    slowest_path: Optional[np.ndarray] = None
    diagnostics: Diagnostics = field(default_factory=Diagnostics)

    @property
    def exited(self) -> np.ndarray:
        return self.exit_times < self.horizon

    @property
    def passed(self) -> bool:
        return bool(np.all(self.exited))

    @property
    def exit_fraction(self) -> float:
        return float(np.mean(self.exited)) if len(self.exit_times) else 1.0

    @property
    def max_exit_time(self) -> float:
        return float(np.max(self.exit_times)) if len(self.exit_times) else 0.0

    def exit_field(self, grid: Grid2D) -> np.ndarray:
        """Exit times arranged on the physical cells (nx_omega, ny) when seeded by default"""
        return self.exit_times.reshape(grid.nx_omega, grid.ny)


def verify_flushing(flow, seeds: Optional[np.ndarray] = None, config: Optional[FlushingConfig] = None) -> FlushingReport:
    """First exit time from the closed physical domain of every seed; passes iff all are below T"""
    config = config or FlushingConfig()
    grid = flow.grid
    seeds = default_seeds(grid) if seeds is None else np.atleast_2d(seeds)
    exit_tau = steady_exit_times(flow, seeds)
    exit_times = np.asarray(flow.amplitude.inverse_cumulative(exit_tau), dtype=float).reshape(-1)
    exit_times = np.where(exit_tau == 0.0, 0.0, exit_times)
    report = FlushingReport(seeds=seeds, exit_times=exit_times, horizon=flow.horizon)
    report.diagnostics.record("max_exit_time", report.max_exit_time)
    report.diagnostics.record("exit_fraction", report.exit_fraction)

    if len(seeds):
        slowest = int(np.argmax(exit_times))
        times = np.linspace(0.0, flow.horizon, min(config.n_scan, 200) + 1)
        report.slowest_path = trace(flow, times, seeds[slowest:slowest + 1])[:, 0, :]
    if report.passed:
        logger.info(f"✅ Flushing verified | seeds={len(seeds)} | max exit time={report.max_exit_time:.4f}")
    else:
        logger.warning(
            f"❌ Flushing failed | exited={report.exit_fraction:.1%} | horizon={flow.horizon:g}"
        )
    return report
