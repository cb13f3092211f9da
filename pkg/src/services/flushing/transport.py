"""
Transport controls (u1, theta1, v1, w1) that carry data out through the strip
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from ..base import Diagnostics, TimeSeries
from ..config import FlushingConfig, SolverConfig
from ..exceptions import PartitionError, ValidationError
from ..geometry.calculus import (
    cell_gradient,
    face_gradient,
    faces_to_cells,
    node_curl,
    sample,
    velocity_from_vorticity,
)
from ..geometry.fields import Field
from ..geometry.grid import Box, Grid2D
from ..solver.poisson import PoissonSolver
from ..solver.state import FlowState, ForcingInputs
from .flowmap import integrate_steady
from .partition import FlushPartition
from .reference import ReferenceFlow


logger = logging.getLogger(__name__)


@dataclass
class CharacteristicFeet:
    """Phi0(0; t_k, x) for every cell center and interior node"""
    times: np.ndarray
    cells: np.ndarray
    nodes: np.ndarray


def _points(grid: Grid2D, location: str) -> np.ndarray:
    x, y = grid.coordinates(location)
    if location == "node":
        x, y = x[1:-1, 1:-1], y[1:-1, 1:-1]
    return np.stack([x.ravel(), y.ravel()], axis=1)


def characteristic_feet(flow: ReferenceFlow, times: np.ndarray) -> CharacteristicFeet:
    """Backward characteristics of the grid points, continued from one output time to the next"""
    grid = flow.grid
    cum = np.asarray(flow.amplitude.cumulative(times), dtype=float)
    feet = {}
    for location in ("cell", "node"):
        x = _points(grid, location)
        out = np.empty((len(times),) + x.shape)
        out[0] = x
        for k in range(1, len(times)):
            out[k] = integrate_steady(flow.steady_velocity_at, grid, out[k - 1], -(cum[k] - cum[k - 1]))[0]
        feet[location] = out
    return CharacteristicFeet(times=np.asarray(times, dtype=float), cells=feet["cell"], nodes=feet["node"])


def transported(values: np.ndarray, grid: Grid2D, location: str, feet: np.ndarray) -> np.ndarray:
    """values(Phi0(0; t, x)) on the grid points (bilinear, so supports grow by at most one cell)"""
    out = sample(values, grid, location, feet, order=1)
    if location == "node":
        full = np.zeros(grid.shape("node"))
        full[1:-1, 1:-1] = out.reshape(grid.nx - 1, grid.ny - 1)
        return full
    return out.reshape(grid.shape(location))


def vortex_force(u0: Tuple[np.ndarray, np.ndarray], omega: np.ndarray, grid: Grid2D) -> Tuple[np.ndarray, np.ndarray]:
    """omega * (-u0_y, u0_x) on faces; equals (u0.grad)u + (u.grad)u0 up to a gradient when curl u0 = 0"""
    uu, uv = u0
    fu = np.zeros(grid.shape("u"))
    fv = np.zeros(grid.shape("v"))
    v_at_u = 0.25 * (uv[1:, 1:] + uv[1:, :-1] + uv[:-1, 1:] + uv[:-1, :-1])
    fu[1:-1] = -0.5 * (omega[1:-1, 1:] + omega[1:-1, :-1]) * v_at_u
    u_at_v = 0.25 * (uu[1:, 1:] + uu[1:, :-1] + uu[:-1, 1:] + uu[:-1, :-1])
    fv[:, 1:-1] = 0.5 * (omega[1:, 1:-1] + omega[:-1, 1:-1]) * u_at_v
    return fu, fv


def _physical_pressure(ru: np.ndarray, rv: np.ndarray, grid: Grid2D, poisson: PoissonSolver) -> np.ndarray:
    """Pi with grad Pi = R on Omega as far as R is a gradient, continued across the strip"""
    i0 = grid.nx_omega
    div = (ru[1: i0 + 1] - ru[:i0]) / grid.hx + (rv[:i0, 1:] - rv[:i0, :-1]) / grid.hy
    div[-1] -= ru[i0] / grid.hx
    pi = poisson.solve(-div, "transport_pressure")
    full = np.empty(grid.shape("cell"))
    full[:i0] = pi
    full[i0:] = pi[-1] + grid.hx * ru[i0]
    return full


@dataclass
class TransportControls:
    """Time samples of (u1, theta1) and the controls (v1, w1, sigma1) that drive them"""
    grid: Grid2D
    times: np.ndarray
    u: np.ndarray
    v: np.ndarray
    theta: np.ndarray
    vorticity: np.ndarray
    control_u: np.ndarray
    control_v: np.ndarray
    w: np.ndarray
    sigma: np.ndarray
    pressure: np.ndarray
    diagnostics: Diagnostics = field(default_factory=Diagnostics)

    def __len__(self) -> int:
        return len(self.times)

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def state(self, k: int) -> FlowState:
        t = float(self.times[k])
        return FlowState(t, Field.vector(self.grid, self.u[k], self.v[k], t), Field.scalar(self.grid, self.theta[k], t))

    def at(self, t: float) -> FlowState:
        if t <= self.times[0]:
            return self.state(0)
        if t >= self.times[-1]:
            return self.state(len(self.times) - 1)
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        w = (t - self.times[k]) / (self.times[k + 1] - self.times[k])
        u = (1.0 - w) * self.u[k] + w * self.u[k + 1]
        v = (1.0 - w) * self.v[k] + w * self.v[k + 1]
        th = (1.0 - w) * self.theta[k] + w * self.theta[k + 1]
        return FlowState(t, Field.vector(self.grid, u, v, t), Field.scalar(self.grid, th, t))

    def to_forcing(self, scale: float = 1.0, theta_scale: Optional[float] = None) -> ForcingInputs:
        """Controls as time-interpolated forcing; velocity parts scaled by scale, w by theta_scale"""
        theta_scale = scale if theta_scale is None else theta_scale
        cu = TimeSeries(self.times, [scale * a for a in self.control_u])
        cv = TimeSeries(self.times, [scale * a for a in self.control_v])
        w = TimeSeries(self.times, [theta_scale * a for a in self.w])
        sigma = TimeSeries(self.times, [scale * a for a in self.sigma])
        has_sigma = bool(np.any(self.sigma != 0.0))
        return ForcingInputs(
            v=lambda t: (cu.at(t), cv.at(t)),
            w=w.at,
            sigma=sigma.at if has_sigma else None,
        )

    def time_reversed(self) -> "TransportControls":
        """Profiles run backward in time: u(T - t), theta(T - t), w -> -w(T - t)"""
        times = self.times[-1] - self.times[::-1]
        return TransportControls(
            grid=self.grid,
            times=times,
            u=self.u[::-1].copy(),
            v=self.v[::-1].copy(),
            theta=self.theta[::-1].copy(),
            vorticity=self.vorticity[::-1].copy(),
            control_u=-self.control_u[::-1],
            control_v=-self.control_v[::-1],
            w=-self.w[::-1],
            sigma=self.sigma[::-1].copy(),
            pressure=-self.pressure[::-1],
            diagnostics=Diagnostics(dict(self.diagnostics.values), list(self.diagnostics.warnings)),
        )

    def norm_profile(self) -> np.ndarray:
        """H1-proxy of (u1, theta1) per time sample"""
        area = self.grid.cell_area
        out = np.empty(len(self.times))
        for k in range(len(self.times)):
            gx, gy = cell_gradient(self.theta[k], self.grid)
            out[k] = np.sqrt(area * (
                np.sum(self.u[k] ** 2) + np.sum(self.v[k] ** 2) + np.sum(self.vorticity[k] ** 2)
                + np.sum(self.theta[k] ** 2) + np.sum(gx ** 2 + gy ** 2)
            ))
        return out


def _check_piece(ell: int, partition: FlushPartition, feet: CharacteristicFeet, data: np.ndarray,
                 eta: np.ndarray) -> Tuple[int, float]:
    """Largest |w_l| outside its square (grown by one cell) over its window"""
    grid = partition.grid
    box = partition.square(ell)
    grown = Box(box.x0 - grid.hx, box.x1 + grid.hx, box.y0 - grid.hy, box.y1 + grid.hy)
    outside = ~grid.mask(grown, "cell")
    piece = eta[ell] * data
    scale = max(float(np.max(np.abs(piece))), 1e-300)
    leak = 0.0
    for k, t in enumerate(feet.times):
        rate = partition.cutoff_rates(t)[0][ell]
        if rate == 0.0:
            continue
        values = rate * transported(piece, grid, "cell", feet.cells[k])
        leak = max(leak, float(np.max(np.abs(values[outside]))) / scale)
    return ell, leak


def transport_control(
    flow: ReferenceFlow,
    partition: FlushPartition,
    u_star: Field,
    theta_star: Field,
    config: Optional[FlushingConfig] = None,
    n_steps: Optional[int] = None,
    solver_config: Optional[SolverConfig] = None,
    leak_tol: float = 1e-8,
) -> TransportControls:
    """Flush (u_*, theta_*) with the reference flow so that (u1, theta1)(T) = 0

    theta1 = sum_l beta(t - t_l) theta_l with theta_l the transported
    eta_l theta_*, and w1 = sum_l beta'(t - t_l) theta_l. The vorticity of
    u_* is carried the same way; u1 is rebuilt from it through a stream
    function and v1 is the momentum residual once the part of it that is a
    gradient on Omega has gone into the pressure.
    """
    config = config or FlushingConfig()
    solver_config = solver_config or SolverConfig()
    grid = flow.grid
    if not grid.same_as(u_star.grid):
        raise ValidationError("Data and reference flow live on different grids")
    n_steps = n_steps or config.n_transport_steps
    times = np.linspace(0.0, flow.horizon, n_steps + 1)
    feet = characteristic_feet(flow, times)
    diagnostics = Diagnostics()

    theta0 = np.asarray(theta_star.values, dtype=float)
    omega0 = node_curl(u_star.u, u_star.v, grid)
    poisson = PoissonSolver((grid.nx, grid.ny), grid.hx, grid.hy, solver_config.poisson_tol, solver_config.poisson_maxiter)
    sigma_star = (u_star.u[1:] - u_star.u[:-1]) / grid.hx + (u_star.v[:, 1:] - u_star.v[:, :-1]) / grid.hy
    q = poisson.solve(-sigma_star, "transport_gradient_part")
    qu, qv = face_gradient(q, grid)

    eta_cells = partition.weights("cell")
    eta_nodes = partition.weights("node")

    # w_l must stay inside its square while its cutoff moves
    with ThreadPoolExecutor(max_workers=max(config.workers, 1)) as pool:
        leaks = list(pool.map(
            lambda ell: _check_piece(ell, partition, feet, theta0, eta_cells[0]),
            range(len(partition)),
        ))
    worst = max((leak for _, leak in leaks), default=0.0)
    diagnostics.record("w_support_leak", worst)
    if worst > leak_tol:
        ell = max(leaks, key=lambda item: item[1])[0]
        raise PartitionError(
            f"Temperature control of ball {ell} leaks outside its square | leak={worst:.3e}",
            details={"ball": ell, "leak": worst},
        )

    n = len(times)
    theta = np.empty((n,) + grid.shape("cell"))
    w = np.empty_like(theta)
    vort = np.empty((n,) + grid.shape("node"))
    u = np.empty((n,) + grid.shape("u"))
    v = np.empty((n,) + grid.shape("v"))
    sigma = np.empty_like(theta)
    for k, t in enumerate(times):
        weight = partition.aggregate(t, "cell", weights=eta_cells)
        rate = partition.aggregate(t, "cell", derivative=True, weights=eta_cells)
        theta[k] = transported(weight * theta0, grid, "cell", feet.cells[k])
        w[k] = transported(rate * theta0, grid, "cell", feet.cells[k])
        node_weight = partition.aggregate(t, "node", weights=eta_nodes)
        vort[k] = transported(node_weight * omega0, grid, "node", feet.nodes[k])
        ru, rv = velocity_from_vorticity(vort[k], grid)
        beta_ext = partition.cutoffs(t)[1]
        u[k] = ru + beta_ext * qu
        v[k] = rv + beta_ext * qv
        sigma[k] = beta_ext * sigma_star

    controls = _assemble_controls(flow, grid, times, u, v, vort, poisson, diagnostics)
    control_u, control_v, pressure = controls

    closure = grid.physical_closure
    diagnostics.record("w_on_domain", float(np.max(np.abs(w[:, closure["cell"]]))) if np.any(closure["cell"]) else 0.0)
    w[:, closure["cell"]] = 0.0
    diagnostics.record("final_theta", float(np.max(np.abs(theta[-1]))))
    diagnostics.record("final_velocity", float(max(np.max(np.abs(u[-1])), np.max(np.abs(v[-1])))))

    result = TransportControls(
        grid=grid, times=times, u=u, v=v, theta=theta, vorticity=vort,
        control_u=control_u, control_v=control_v, w=w, sigma=sigma, pressure=pressure,
        diagnostics=diagnostics,
    )
    diagnostics.record("theta_residual", theta_residual(result, flow))
    logger.info(
        f"Transport controls built | steps={n_steps} | balls={len(partition)} | "
        f"leak={worst:.2e} | v1 residual on Omega={diagnostics.values['velocity_residual']:.2e}"
    )
    return result


def _assemble_controls(flow: ReferenceFlow, grid: Grid2D, times: np.ndarray, u: np.ndarray, v: np.ndarray,
                       vort: np.ndarray, poisson: PoissonSolver,
                       diagnostics: Diagnostics) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """v1 = du1/dt + omega1 u0^perp - Lap u0 - grad Pi, masked off the closed physical domain"""
    du = np.gradient(u, times, axis=0) if len(times) > 1 else np.zeros_like(u)
    dv = np.gradient(v, times, axis=0) if len(times) > 1 else np.zeros_like(v)
    omega_poisson = PoissonSolver((grid.nx_omega, grid.ny), grid.hx, grid.hy, poisson.tol, poisson.maxiter)
    control_u = np.empty_like(u)
    control_v = np.empty_like(v)
    pressure = np.empty((len(times),) + grid.shape("cell"))
    residual = 0.0
    closure = grid.physical_closure
    for k, t in enumerate(times):
        fu, fv = vortex_force(flow.velocity(t), vort[k], grid)
        lu, lv = face_gradient(flow.sigma(t), grid)
        ru = du[k] + fu - lu
        rv = dv[k] + fv - lv
        ru[0] = ru[-1] = 0.0
        rv[:, 0] = rv[:, -1] = 0.0
        pi = _physical_pressure(ru, rv, grid, omega_poisson)
        gu, gv = face_gradient(pi, grid)
        cu, cv = ru - gu, rv - gv
        residual = max(residual, float(np.max(np.abs(cu[closure["u"]]))), float(np.max(np.abs(cv[closure["v"]]))))
        cu[closure["u"]] = 0.0
        cv[closure["v"]] = 0.0
        control_u[k], control_v[k] = cu, cv
        uc, vc = faces_to_cells(*flow.velocity(t))
        xc, yc = faces_to_cells(u[k], v[k])
        pressure[k] = pi - (uc * xc + vc * yc)
    diagnostics.record("velocity_residual", residual)
    return control_u, control_v, pressure


def theta_residual(controls: TransportControls, flow: ReferenceFlow) -> float:
    """max |d theta1/dt + u0.grad theta1 - w1| on interior cells of Omega, relative to the term sizes"""
    grid = controls.grid
    times = controls.times
    if len(times) < 3:
        return 0.0
    dtheta = np.gradient(controls.theta, times, axis=0)
    worst, scale = 0.0, 1e-300
    inner = np.zeros(grid.shape("cell"), dtype=bool)
    inner[1:grid.nx_omega - 1, 1:-1] = True
    for k, t in enumerate(times):
        uc, vc = faces_to_cells(*flow.velocity(t))
        gx, gy = cell_gradient(controls.theta[k], grid)
        adv = uc * gx + vc * gy
        res = dtheta[k] + adv - controls.w[k]
        worst = max(worst, float(np.max(np.abs(res[inner]))))
        scale = max(scale, float(np.max(np.abs(dtheta[k][inner]))), float(np.max(np.abs(adv[inner]))))
    return worst / scale


def exact_transport_control(
    flow: ReferenceFlow,
    partition: FlushPartition,
    reverse_partition: FlushPartition,
    initial: Tuple[Field, Field],
    target: Tuple[Field, Field],
    config: Optional[FlushingConfig] = None,
    n_steps: Optional[int] = None,
    solver_config: Optional[SolverConfig] = None,
) -> TransportControls:
    """Controls steering (u_*, theta_*) at t = 0 to (u_T, theta_T) at t = T

    The target is flushed by the reversed carrier -u0(T - t); running that
    construction backward in time and adding the forward one gives a
    solution of the same linear problem with both end values.
    """
    forward = transport_control(flow, partition, *initial, config=config, n_steps=n_steps, solver_config=solver_config)
    backward = transport_control(
        flow.reversed(), reverse_partition, *target, config=config, n_steps=n_steps, solver_config=solver_config,
    ).time_reversed()
    return combine_controls(flow, [forward, backward], solver_config)


def combine_controls(flow: ReferenceFlow, parts: List[TransportControls],
                     solver_config: Optional[SolverConfig] = None) -> TransportControls:
    """Sum of transport profiles on a shared time grid; v1 is rebuilt from the summed u1"""
    solver_config = solver_config or SolverConfig()
    first = parts[0]
    for other in parts[1:]:
        if len(other.times) != len(first.times) or not np.allclose(other.times, first.times):
            raise ValidationError("Transport profiles use different time grids")
    grid = first.grid
    u = sum(p.u for p in parts)
    v = sum(p.v for p in parts)
    vort = sum(p.vorticity for p in parts)
    diagnostics = Diagnostics()
    for p in parts:
        for name, value in p.diagnostics.values.items():
            diagnostics.record(name, max(value, diagnostics.values.get(name, 0.0)))
    poisson = PoissonSolver((grid.nx, grid.ny), grid.hx, grid.hy, solver_config.poisson_tol, solver_config.poisson_maxiter)
    control_u, control_v, pressure = _assemble_controls(flow, grid, first.times, u, v, vort, poisson, diagnostics)
    return TransportControls(
        grid=grid,
        times=first.times.copy(),
        u=u,
        v=v,
        theta=sum(p.theta for p in parts),
        vorticity=vort,
        control_u=control_u,
        control_v=control_v,
        w=sum(p.w for p in parts),
        sigma=sum(p.sigma for p in parts),
        pressure=pressure,
        diagnostics=diagnostics,
    )
