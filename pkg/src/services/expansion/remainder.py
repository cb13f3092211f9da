"""
Remainder of the expansion: direct solve, nonlinear cross-check and energy bound
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from ..base import Diagnostics, ExpansionMode, Side, check_positive
from ..config import SolverConfig
from ..exceptions import ValidationError, handle_numerical_error
from ..flushing.transport import vortex_force
from ..geometry.calculus import cell_gradient, divergence, face_gradient, node_curl
from ..solver.linearized import LinearCoefficients, LinearizedSolver
from ..solver.navier import BoussinesqSolver
from ..solver.operators import Layout, advection_blocks, build_ghosts, laplacian_blocks
from ..solver.poisson import Projector
from ..solver.state import FlowState, ForcingInputs, Trajectory
from .assemble import assemble_expansion, expansion_terms, remainder_of
from .bundle import ExpansionBundle
from .forcing import RemainderForcing, cells_to_v, remainder_forcing
from .trace import MacPair, directional_derivative


logger = logging.getLogger(__name__)


@dataclass
class GronwallLedger:
    """Running integrals behind the energy estimate of the remainder

    bound(t) = (int ||f|| + ||h||)^2 exp(2 int (||A|| + ||B|| + eps)),
    measured(t) = sup_s |r(s)|^2 + |q(s)|^2.
    """
    times: List[float] = field(default_factory=list)
    amplification: List[float] = field(default_factory=list)
    forcing: List[float] = field(default_factory=list)
    measured: List[float] = field(default_factory=list)
    epsilon: float = 1.0

    def record(self, t: float, dt: float, a_norm: float, f_norm: float, h_norm: float, energy: float) -> None:
        if not self.times:
            self.times.append(t)
            self.amplification.append(0.0)
            self.forcing.append(0.0)
            self.measured.append(energy)
            return
        self.times.append(t)
        self.amplification.append(self.amplification[-1] + dt * (a_norm + self.epsilon))
        self.forcing.append(self.forcing[-1] + dt * (f_norm + h_norm))
        self.measured.append(max(self.measured[-1], energy))

    def bound(self) -> np.ndarray:
        return np.asarray(self.forcing) ** 2 * np.exp(2.0 * np.asarray(self.amplification))

    def respected(self, slack: float = 1.0) -> bool:
        if not self.times:
            return True
        return bool(np.all(np.asarray(self.measured) <= slack * self.bound() + 1e-14))

    def summary(self) -> Dict[str, float]:
        if not self.times:
            return {}
        return {
            "int_amplification": float(self.amplification[-1]),
            "int_forcing": float(self.forcing[-1]),
            "bound": float(self.bound()[-1]),
            "measured": float(self.measured[-1]),
        }


@dataclass
class RemainderRun:
    """Remainder trajectory with its forcing sizes and the energy ledger"""
    trajectory: Trajectory
    ledger: GronwallLedger
    forcing_norms: np.ndarray
    blocks: Dict[str, float]
    diagnostics: Diagnostics = field(default_factory=Diagnostics)

    @property
    def epsilon(self) -> float:
        return self.ledger.epsilon

    def sup_norm(self) -> float:
        """sup_t |r(t)|_L2 + |q(t)|_L2"""
        return float(max(s.u.l2_norm() + s.theta.l2_norm() for s in self.trajectory.states))

    def final_norm(self) -> float:
        final = self.trajectory.final
        return float(final.u.l2_norm() + final.theta.l2_norm())


def _gradient_sup(pair: MacPair, grid) -> float:
    out = 0.0
    for values in pair:
        for axis, h in ((0, grid.hx), (1, grid.hy)):
            out = max(out, float(np.max(np.abs(np.gradient(values, h, axis=axis, edge_order=2)))))
    return out


def boundary_sources(solver: LinearizedSolver, forcing: RemainderForcing) -> np.ndarray:
    """Affine part of the diffusion coming from the inhomogeneous remainder boundary data"""
    base = solver.coefficients.boundary_at(forcing.t)
    ghosts = build_ghosts(solver.grid, base, forcing.boundary_data())
    return solver.viscosity * laplacian_blocks(solver.layout, ghosts)[1]


def solve_remainder(
    bundle: ExpansionBundle,
    horizon: float,
    dt: float,
    config: Optional[SolverConfig] = None,
) -> RemainderRun:
    """(r, q) from zero data under the linearized remainder system

    The transport is the assembled u_app, stretching and coupling come from
    A and B, viscosity and buoyancy are eps. The quadratic eps (r . grad) r
    is left out; ``nonlinear_remainder`` keeps it.
    """
    horizon = check_positive("horizon", horizon)
    dt = check_positive("dt", dt)
    n_steps = max(int(np.ceil(horizon / dt - 1e-9)), 1)
    dt = horizon / n_steps
    grid = bundle.grid
    eps = bundle.epsilon

    cache: Dict[float, object] = {}

    def terms_at(t: float):
        key = round(float(t), 12)
        if key not in cache:
            cache[key] = expansion_terms(bundle, t)
        return cache[key]

    coefficients = LinearCoefficients(
        boundary=bundle.coeffs,
        b=lambda t: terms_at(t).velocity(),
        c=lambda t: eps * terms_at(t).theta1,
        buoyancy=eps,
    )
    try:
        solver = LinearizedSolver(grid, coefficients, n_steps, dt, viscosity=eps, config=config)
        lay = solver.layout
        times = solver.times()
        ledger = GronwallLedger(epsilon=eps)
        ledger.record(float(times[0]), 0.0, 0.0, 0.0, 0.0, 0.0)
        sources, norms = [], []
        blocks: Dict[str, float] = {}
        for t in times[:-1]:
            forcing = remainder_forcing(bundle, float(t))
            f_norm, h_norm = forcing.norms(grid.cell_area)
            norms.append((f_norm, h_norm))
            for name, value in forcing.blocks.items():
                blocks[name] = max(blocks.get(name, 0.0), value)
            sources.append(lay.pack(forcing.f[0], forcing.f[1], forcing.h) + boundary_sources(solver, forcing))
        states = solver.propagate_sources(np.zeros(lay.size), sources, keep=False)
    except ValidationError:
        raise
    except Exception as e:
        raise handle_numerical_error(e, "remainder_solve")

    flows: List[FlowState] = []
    for n, (x, t) in enumerate(zip(states, times)):
        state = solver.to_state(x, float(t))
        flows.append(state)
        if n == 0:
            continue
        terms = terms_at(float(times[n - 1]))
        gx, gy = cell_gradient(terms.theta1, grid)
        a_norm = _gradient_sup(terms.velocity(), grid) + eps * float(np.max(np.hypot(gx, gy)))
        f_norm, h_norm = norms[n - 1]
        energy = state.u.l2_norm() ** 2 + state.theta.l2_norm() ** 2
        ledger.record(float(t), dt, a_norm, f_norm, h_norm, energy)

    trajectory = Trajectory(flows, eps)
    run = RemainderRun(trajectory, ledger, np.asarray(norms), blocks)
    run.diagnostics.record("steps", n_steps)
    run.diagnostics.record("sup_norm", run.sup_norm())
    for name, value in ledger.summary().items():
        run.diagnostics.record(name, value)
    if not ledger.respected():
        run.diagnostics.warn("Measured remainder energy exceeds the Gronwall bound")
    logger.info(
        f"Remainder solved | mode={bundle.mode.value} | eps={eps:.4g} | steps={n_steps} | "
        f"sup={run.sup_norm():.4e} | bound={ledger.summary().get('bound', 0.0):.4e}"
    )
    return run


def sum_forcing(*parts: ForcingInputs) -> ForcingInputs:
    """Pointwise sum of several control sets"""
    parts = tuple(p for p in parts if p is not None and not p.is_zero())
    velocity = [p.v for p in parts if p.v is not None]
    heat = [p.w for p in parts if p.w is not None]
    divergence = [p.sigma for p in parts if p.sigma is not None]

    def v(t: float):
        pairs = [fn(t) for fn in velocity]
        return sum(np.asarray(a) for a, _ in pairs), sum(np.asarray(b) for _, b in pairs)

    return ForcingInputs(
        v=v if velocity else None,
        w=(lambda t: sum(np.asarray(fn(t)) for fn in heat)) if heat else None,
        sigma=(lambda t: sum(np.asarray(fn(t)) for fn in divergence)) if divergence else None,
        check_support=all(p.check_support for p in parts) if parts else True,
    )


def layer_forcing(bundle: ExpansionBundle, leaks: Optional[Diagnostics] = None) -> ForcingInputs:
    """sqrt(eps) {v_rho} restricted to the control zone

    The part of the lifted layer control that falls inside the closed
    physical domain is cut and its size is recorded as ``layer_control_leak``.
    """
    grid = bundle.grid
    closure = grid.physical_closure
    root = bundle.root

    def v(t: float):
        u, w = bundle.sampler().vector(tangential=bundle.layer_control(t))
        leak = max(
            float(np.max(np.abs(u[closure["u"]]), initial=0.0)),
            float(np.max(np.abs(w[closure["v"]]), initial=0.0)),
        )
        if leaks is not None and leak > 0.0:
            leaks.record("layer_control_leak", max(leaks.values.get("layer_control_leak", 0.0), root * leak))
        return np.where(closure["u"], 0.0, root * u), np.where(closure["v"], 0.0, root * w)

    return ForcingInputs(v=v)


def expansion_controls(bundle: ExpansionBundle, diagnostics: Optional[Diagnostics] = None) -> ForcingInputs:
    """Controls of the eps-system that carry the expansion: v0, sigma0, eps (v1, sigma1), eps^2 w1, sqrt(eps) v_rho"""
    eps = bundle.epsilon
    parts = []
    if bundle.flow is not None and bundle.mode != ExpansionMode.TRACKING_2:
        parts.append(bundle.flow.to_forcing(viscosity=eps))
    if bundle.transport is not None and bundle.mode != ExpansionMode.TRACKING_2:
        parts.append(bundle.transport.to_forcing(scale=eps, theta_scale=eps ** 2))
    if bundle.has_layers:
        parts.append(layer_forcing(bundle, diagnostics))
    return sum_forcing(*parts)


def remainder_source(bundle: ExpansionBundle, layout: Layout, t: float) -> np.ndarray:
    """Packed (f, h) plus the boundary offsets, the source the linearized remainder sees at t"""
    forcing = remainder_forcing(bundle, t)
    ghosts = build_ghosts(bundle.grid, bundle.coeffs, forcing.boundary_data())
    offsets = bundle.epsilon * laplacian_blocks(layout, ghosts)[1]
    return layout.pack(forcing.f[0], forcing.f[1], forcing.h) + offsets


def tracking_forcing(bundle: ExpansionBundle, solver: BoussinesqSolver, dt: float) -> ForcingInputs:
    """Controls under which one step of ``solver`` from x_app(t) lands on x_app(t + dt), plus eps f and eps^2 h

    The truncation error of u_app in the scheme is absorbed by the control,
    so the computed remainder obeys the discrete remainder equations. Holds
    for steps of exactly dt.
    """
    lay = solver.layout
    grid = bundle.grid
    eps = bundle.epsilon
    scaling = np.concatenate([np.full(lay.n_vel, eps), np.full(lay.n_c, eps ** 2)])
    states: Dict[float, np.ndarray] = {}
    packed: Dict[float, np.ndarray] = {}

    def state(t: float) -> np.ndarray:
        key = round(float(t), 12)
        if key not in states:
            approx = assemble_expansion(bundle, float(t))
            states[key] = solver.pack(approx.u, approx.theta)
        return states[key]

    def control(t: float) -> np.ndarray:
        key = round(float(t), 12)
        if key not in packed:
            x, ahead = state(t), state(t + dt)
            out = (ahead - solver.epsilon * dt * (solver.laplacian @ ahead) - x) / dt
            if solver.config.advection:
                u, v, _ = lay.unpack(x)
                adv, adv_off = advection_blocks(lay, solver.ghosts, u, v)
                out += adv @ x + adv_off
            if solver.config.buoyancy:
                out[: lay.n_vel] -= solver.buoyancy @ x[lay.sc]
            packed[key] = out + scaling * remainder_source(bundle, lay, t)
        return packed[key]

    def v(t: float):
        u, w, _ = lay.unpack(control(t))
        return u, w

    return ForcingInputs(
        v=v,
        w=lambda t: lay.unpack(control(t))[2],
        sigma=lambda t: (lay.divergence @ state(t)[: lay.n_vel]).reshape(grid.nx, grid.ny),
        check_support=False,
    )


def nonlinear_remainder(
    bundle: ExpansionBundle,
    horizon: float,
    dt: float,
    config: Optional[SolverConfig] = None,
    output_every: int = 1,
    tracking: bool = True,
) -> Trajectory:
    """Remainder read off a full run of the eps-system started at u_app(0)

    Each output state is turned into ((u - u_app) / eps, (theta - theta_app) / eps^2).
    With ``tracking`` the run is driven by ``tracking_forcing``, otherwise by
    the expansion controls themselves.
    """
    horizon = check_positive("horizon", horizon)
    n_steps = max(int(np.ceil(horizon / check_positive("dt", dt) - 1e-9)), 1)
    dt = horizon / n_steps
    diagnostics = Diagnostics()
    solver = BoussinesqSolver(bundle.grid, bundle.coeffs, config, epsilon=bundle.epsilon)
    initial = assemble_expansion(bundle, 0.0)
    controls = tracking_forcing(bundle, solver, dt) if tracking else expansion_controls(bundle, diagnostics)
    run = solver.run(initial, horizon, controls, dt=dt, output_every=output_every, record_energy=False)
    states = [remainder_of(bundle, s) for s in run.states]
    out = Trajectory(states, bundle.epsilon, diagnostics=run.diagnostics)
    for name, value in diagnostics.values.items():
        out.diagnostics.record(name, value)
    return out


def cross_check(direct: Trajectory, indirect: Trajectory) -> float:
    """Largest relative gap between two remainder trajectories at the times they share"""
    gap = 0.0
    times = indirect.times
    for state in direct.states:
        if np.min(np.abs(times - state.t)) > 1e-9:
            continue
        other = indirect.at(state.t)
        scale = max(state.norm(), other.norm(), 1e-300)
        gap = max(gap, state.minus(other).norm() / scale)
    return float(gap)


def remainder_norms(bundle: ExpansionBundle, horizon: float, dt: float, config: Optional[SolverConfig] = None,
                    check: bool = True, checkpoints: int = 10) -> Dict[str, float]:
    """sup_t |r|^2 + |q|^2 of the direct solve and, with ``check``, its gap to the nonlinear run"""
    run = solve_remainder(bundle, horizon, dt, config)
    energy = max(s.u.l2_norm() ** 2 + s.theta.l2_norm() ** 2 for s in run.trajectory.states)
    out = {"remainder": float(energy)}
    if check:
        n_steps = len(run.trajectory.states) - 1
        indirect = nonlinear_remainder(bundle, horizon, dt, config, output_every=max(n_steps // checkpoints, 1))
        out["cross_check"] = cross_check(run.trajectory, indirect)
        logger.info(f"Remainder cross-check | eps={bundle.epsilon:.4g} | gap={out['cross_check']:.3e}")
    return out


def side_mismatch(bundle: ExpansionBundle, t: float) -> Dict[Side, float]:
    """Largest value of the Navier data -N(g) per side"""
    forcing = remainder_forcing(bundle, t)
    return {side: float(np.max(np.abs(values), initial=0.0)) for side, values in forcing.navier.items()}


def rotational_laplacian(pair: MacPair, grid) -> MacPair:
    """grad div u - curl curl u on faces; exactly a gradient when the node curl vanishes"""
    gu, gv = face_gradient(divergence(pair[0], pair[1], grid), grid)
    omega = node_curl(pair[0], pair[1], grid)
    return (
        gu - (omega[:, 1:] - omega[:, :-1]) / grid.hy,
        gv + (omega[1:, :] - omega[:-1, :]) / grid.hx,
    )


def structural_residual(bundle: ExpansionBundle, t: float, dt: float = 1e-3,
                        config: Optional[SolverConfig] = None) -> float:
    """Gap between eps f and the residual of u_app in the momentum equation

    Both sides are Leray-projected, so the gradients dropped from f do not
    count. Convection and viscosity of u_app are taken in rotational form,
    which the projection removes exactly for a discrete potential flow.
    The gap is relative to the largest single term of the balance. Time
    derivatives are central differences of width 2 dt.
    """
    config = config or SolverConfig()
    grid = bundle.grid
    eps = bundle.epsilon
    lay = Layout(grid)
    projector = Projector(lay, config.poisson_tol, config.poisson_maxiter)

    lo, hi = max(t - dt, 0.0), t + dt
    before = expansion_terms(bundle, lo).velocity()
    after = expansion_terms(bundle, hi).velocity()
    terms = expansion_terms(bundle, t)
    u = terms.velocity()
    controls = expansion_controls(bundle).velocity(t, grid)
    rate = tuple((after[c] - before[c]) / (hi - lo) for c in range(2))
    convection = vortex_force(u, node_curl(u[0], u[1], grid), grid)
    viscous = rotational_laplacian(u, grid)
    buoyancy = cells_to_v(terms.temperature())
    residual = [
        rate[c] + convection[c] - eps * viscous[c] - np.asarray(controls[c])
        for c in range(2)
    ]
    residual[1] = residual[1] - buoyancy

    forcing = remainder_forcing(bundle, t)
    lhs = projector.apply(lay.pack_velocity(*residual))
    rhs = projector.apply(lay.pack_velocity(-eps * forcing.f[0], -eps * forcing.f[1]))
    sizes = [
        lay.pack_velocity(*rate),
        lay.pack_velocity(*directional_derivative(u, u, grid)),
        lay.pack_velocity(eps * viscous[0], eps * viscous[1]),
        lay.pack_velocity(*(np.asarray(a) for a in controls)),
        lay.pack_velocity(np.zeros(grid.shape("u")), buoyancy),
        lay.pack_velocity(eps * forcing.f[0], eps * forcing.f[1]),
    ]
    scale = max(max(float(np.linalg.norm(a)) for a in sizes), 1e-300)
    return float(np.linalg.norm(lhs - rhs)) / scale
