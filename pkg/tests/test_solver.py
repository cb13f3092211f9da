from dataclasses import replace

import numpy as np
import pytest

from conftest import divergence_free, strip_source
from services.base import FieldKind
from services.config import GridConfig, SolverConfig
from services.exceptions import CFLViolationError, SupportLeakError, ValidationError
from services.geometry import BoundaryCoefficients, Field, Grid2D
from services.geometry.calculus import divergence, stream_velocity
from services.solver import (
    BoussinesqSolver,
    FlowState,
    ForcingInputs,
    LinearCoefficients,
    LinearizedSolver,
    energy_audit,
    mass_drift,
    solve_adjoint,
    solve_linearized,
    steady_stokes,
    step_nonlinear,
    stokes_lift,
)


def zero_state(grid, t=0.0):
    return FlowState(t, Field.zeros(grid, FieldKind.VECTOR, t), Field.zeros(grid, FieldKind.SCALAR, t))


def strip_controls(grid, amplitude=1.0):
    """Smooth v and w supported in the control region"""
    region = grid.omega

    def bump(location):
        x, y = grid.coordinates(location)
        sx = np.clip((x - region.x0) / region.width, 0.0, 1.0)
        sy = np.clip((y - region.y0) / region.height, 0.0, 1.0)
        return np.sin(np.pi * sx) ** 2 * np.sin(np.pi * sy) ** 2

    bu, bv, bc = bump("u"), bump("v"), bump("cell")
    return ForcingInputs(
        v=lambda t: (amplitude * np.cos(3.0 * t) * bu, amplitude * bv),
        w=lambda t: amplitude * np.sin(2.0 * t + 0.3) * bc,
    )


def random_state_vector(layout, rng, projector):
    x = rng.standard_normal(layout.size)
    x[: layout.n_vel] = projector.apply(x[: layout.n_vel])
    return x


def manufactured_error(n, epsilon=0.1, amplitude=0.2, t_end=0.05):
    """Relative L2 error at t_end of a steady slip/Neumann solution held by its own forcing

    psi = A sin(a x) sin(b y) and theta = cos(a x) cos(b y) on the unit
    square satisfy u.n = 0, d_n u_tau = 0 and d_n theta = 0 on every wall.
    """
    grid = Grid2D.from_config(GridConfig(nx=n, ny=n, lx=1.0, ly=1.0, physical_fraction=0.5))
    coeffs = BoundaryCoefficients.uniform(grid, friction=0.0, heat=0.0)
    a, b = np.pi / grid.lx, np.pi / grid.ly
    k2 = a ** 2 + b ** 2

    def velocity(location):
        x, y = grid.coordinates(location)
        u = amplitude * b * np.sin(a * x) * np.cos(b * y)
        v = -amplitude * a * np.cos(a * x) * np.sin(b * y)
        return x, y, u, v

    def temperature(x, y):
        return np.cos(a * x) * np.cos(b * y)

    xu, yu, uu, _ = velocity("u")
    xv, yv, _, vv = velocity("v")
    xc, yc = grid.coordinates("cell")
    fu = epsilon * k2 * uu + 0.5 * amplitude ** 2 * a * b ** 2 * np.sin(2.0 * a * xu)
    fv = epsilon * k2 * vv + 0.5 * amplitude ** 2 * a ** 2 * b * np.sin(2.0 * b * yv) - temperature(xv, yv)
    _, _, uc, vc = velocity("cell")
    theta = temperature(xc, yc)
    fw = epsilon * k2 * theta + uc * (-a * np.sin(a * xc) * np.cos(b * yc)) + vc * (-b * np.cos(a * xc) * np.sin(b * yc))
    forcing = ForcingInputs(v=lambda t: (fu, fv), w=lambda t: fw, check_support=False)

    xn, yn = grid.coordinates("node")
    u0, v0 = stream_velocity(amplitude * np.sin(a * xn) * np.sin(b * yn), grid)
    state = FlowState(0.0, Field.vector(grid, u0, v0), Field.scalar(grid, theta))
    dt = 0.25 * grid.hx ** 2
    steps = int(round(t_end / dt))
    config = SolverConfig(epsilon=epsilon, dt=t_end / steps)
    for _ in range(steps):
        state = step_nonlinear(state, forcing, config, coeffs)

    gaps = [state.u.u[1:-1] - uu[1:-1], state.u.v[:, 1:-1] - vv[:, 1:-1], state.theta.values - theta]
    sizes = [uu[1:-1], vv[:, 1:-1], theta]
    return float(np.sqrt(sum(np.sum(g ** 2) for g in gaps) / sum(np.sum(s ** 2) for s in sizes)))


class TestNonlinearSolver:
    def test_zero_state_stays_zero(self, grid, coeffs):
        solver = BoussinesqSolver(grid, coeffs, SolverConfig(dt=1e-2))
        trajectory = solver.run(zero_state(grid), 0.1)
        assert trajectory.final.norm() == 0.0
        assert step_nonlinear(zero_state(grid), ForcingInputs.zero(), SolverConfig(dt=1e-2), coeffs).norm() == 0.0

    @pytest.mark.slow
    def test_manufactured_solution_converges_at_second_order(self):
        errors = [manufactured_error(n) for n in (16, 32, 64)]
        order = np.log(errors[0] / errors[-1]) / np.log(4.0)
        assert errors[2] < errors[1] < errors[0]
        assert order >= 1.7

    def test_projection_keeps_velocity_divergence_free(self, grid, coeffs):
        theta = Field.scalar(grid, 0.1 * np.cos(np.pi * grid.coordinates("cell")[0] / grid.lx))
        initial = FlowState(0.0, divergence_free(grid, amplitude=0.05), theta)
        solver = BoussinesqSolver(grid, coeffs, SolverConfig(dt=5e-3))
        trajectory = solver.run(initial, 0.1, output_every=5)
        assert trajectory.diagnostics.values["max_divergence_residual"] < 1e-8
        for state in trajectory.states:
            assert np.max(np.abs(divergence(state.u.u, state.u.v, grid))) < 1e-8

    def test_free_decay_is_monotone(self, grid, coeffs):
        initial = FlowState(0.0, divergence_free(grid, amplitude=1e-3), Field.zeros(grid, FieldKind.SCALAR))
        solver = BoussinesqSolver(grid, coeffs, SolverConfig(dt=5e-3))
        trajectory = solver.run(initial, 0.2, output_every=4)
        audit = energy_audit(trajectory)
        assert audit.monotone
        assert audit.passed
        norms = trajectory.norms()
        assert np.all(np.diff(norms) <= 1e-3 * norms[0])

    def test_pure_conduction_decays(self, grid, coeffs):
        x, y = grid.coordinates("cell")
        theta = Field.scalar(grid, 1.0 + np.cos(np.pi * x / grid.lx) * np.cos(np.pi * y / grid.ly))
        initial = FlowState(0.0, Field.zeros(grid, FieldKind.VECTOR), theta)
        config = SolverConfig(dt=1e-2, advection=False, buoyancy=False)
        trajectory = BoussinesqSolver(grid, coeffs, config).run(initial, 0.3, output_every=1)
        thetas = [s.theta.l2_norm() for s in trajectory.states]
        assert np.all(np.diff(thetas) < 0.0)

    def test_mass_is_conserved_without_heat_transfer(self, grid):
        coeffs = BoundaryCoefficients.uniform(grid, friction=0.5, heat=0.0)
        x, _ = grid.coordinates("cell")
        theta = Field.scalar(grid, np.cos(np.pi * x / grid.lx) + 2.0)
        initial = FlowState(0.0, Field.zeros(grid, FieldKind.VECTOR), theta)
        config = SolverConfig(dt=1e-2, advection=False, buoyancy=False)
        trajectory = BoussinesqSolver(grid, coeffs, config).run(initial, 0.2, output_every=5)
        assert np.max(np.abs(mass_drift(trajectory))) < 1e-10

    def test_energy_inequality_with_controls(self, grid, coeffs):
        initial = FlowState(0.0, divergence_free(grid, amplitude=0.1), Field.zeros(grid, FieldKind.SCALAR))
        config = SolverConfig(dt=1e-2, advection=False)
        trajectory = BoussinesqSolver(grid, coeffs, config).run(initial, 0.3, strip_controls(grid), output_every=5)
        audit = energy_audit(trajectory)
        assert audit.passed
        assert audit.max_violation <= 1e-3

    def test_controls_must_vanish_on_physical_domain(self, grid, coeffs):
        leaking = ForcingInputs(w=lambda t: np.ones(grid.shape("cell")))
        solver = BoussinesqSolver(grid, coeffs, SolverConfig(dt=1e-2))
        with pytest.raises(SupportLeakError):
            solver.run(zero_state(grid), 0.05, leaking)

    def test_initial_divergence_must_match_source(self, grid, coeffs):
        solver = BoussinesqSolver(grid, coeffs, SolverConfig(dt=1e-2))
        forcing = ForcingInputs(sigma=strip_source(grid))
        with pytest.raises(ValidationError):
            solver.run(zero_state(grid), 0.05, forcing)

    def test_cfl_retry_cap(self, grid, coeffs):
        initial = FlowState(0.0, divergence_free(grid, amplitude=1e4), Field.zeros(grid, FieldKind.SCALAR))
        solver = BoussinesqSolver(grid, coeffs, SolverConfig(dt=1e-2, max_retries=2))
        with pytest.raises(CFLViolationError):
            solver.run(initial, 0.05)

    def test_cfl_halving_recovers(self, grid, coeffs):
        initial = FlowState(0.0, divergence_free(grid, amplitude=0.5), Field.zeros(grid, FieldKind.SCALAR))
        solver = BoussinesqSolver(grid, coeffs, SolverConfig(dt=5e-2, max_retries=8))
        trajectory = solver.run(initial, 0.1, output_every=1)
        assert trajectory.diagnostics.values["cfl_retries"] > 0
        assert trajectory.final.t == pytest.approx(0.1)

    def test_scaled_and_unscaled_runs_agree(self, grid, coeffs):
        eps = 0.1
        u0 = divergence_free(grid, amplitude=0.2)
        x, _ = grid.coordinates("cell")
        theta0 = Field.scalar(grid, 0.1 * np.cos(np.pi * x / grid.lx))
        dt_u = 2e-3
        unscaled = BoussinesqSolver(grid, coeffs, SolverConfig(dt=dt_u)).run(
            FlowState(0.0, u0, theta0), 0.02, output_every=10
        )
        scaled_initial = FlowState(0.0, eps * u0, eps ** 2 * theta0)
        scaled = BoussinesqSolver(grid, coeffs, SolverConfig(dt=dt_u / eps), epsilon=eps).run(
            scaled_initial, 0.02 / eps, output_every=10
        )
        back_u = (1.0 / eps) * scaled.final.u
        back_theta = (1.0 / eps ** 2) * scaled.final.theta
        assert np.allclose(back_u.u, unscaled.final.u.u, atol=1e-8)
        assert np.allclose(back_u.v, unscaled.final.u.v, atol=1e-8)
        assert np.allclose(back_theta.values, unscaled.final.theta.values, atol=1e-8)


class TestLinearizedSystem:
    def coefficients(self, grid, coeffs, with_coupling=True):
        a = divergence_free(grid, amplitude=0.3)
        b = divergence_free(grid, amplitude=0.2, modes=((2, 2, 1.0),))
        x, y = grid.coordinates("cell")
        c = np.sin(np.pi * x / grid.lx) * np.cos(np.pi * y / grid.ly) if with_coupling else None
        return LinearCoefficients(boundary=coeffs, a=(a.u, a.v), b=(b.u, b.v), c=c)

    def test_zero_data_gives_zero(self, grid, coeffs):
        zero_u = Field.zeros(grid, FieldKind.VECTOR)
        zero_t = Field.zeros(grid, FieldKind.SCALAR)
        forward = solve_linearized(zero_u, zero_t, self.coefficients(grid, coeffs), t_end=0.05, n_steps=5)
        backward = solve_adjoint(zero_u, zero_t, self.coefficients(grid, coeffs), t_end=0.05, n_steps=5)
        assert forward.final.norm() == 0.0
        assert backward.initial.norm() == 0.0

    def test_discrete_duality(self, square_grid, rng):
        grid = square_grid
        coeffs = BoundaryCoefficients.uniform(grid, friction=0.4, heat=0.2)
        solver = LinearizedSolver(grid, self.coefficients(grid, coeffs), n_steps=8, dt=5e-3)
        layout = solver.layout
        x0 = random_state_vector(layout, rng, solver.projector)
        terminal = random_state_vector(layout, rng, solver.projector)
        sources = [rng.standard_normal(layout.size) for _ in range(solver.n_steps)]
        assert solver.duality_residual(x0, sources, terminal) < 1e-6

    def test_backpropagate_is_the_control_gradient(self, grid, coeffs, rng):
        solver = LinearizedSolver(grid, self.coefficients(grid, coeffs), n_steps=6, dt=5e-3)
        controls = rng.standard_normal((solver.n_steps, solver.control_size))
        terminal = rng.standard_normal(solver.state_size)
        final = solver.propagate(np.zeros(solver.state_size), controls)
        gradient = solver.backpropagate(terminal)
        lhs = solver.inner(final, terminal)
        rhs = sum(solver.inner(c, g) for c, g in zip(controls, gradient))
        assert lhs == pytest.approx(rhs, rel=1e-8)

    def test_time_dependent_boundary_coefficients(self, grid, rng):
        base = BoundaryCoefficients.uniform(grid, friction=0.2, heat=0.1)
        coefficients = LinearCoefficients(boundary=lambda t: base.scaled(1.0 + t, 1.0 + 2.0 * t))
        solver = LinearizedSolver(grid, coefficients, n_steps=5, dt=1e-2)
        x0 = random_state_vector(solver.layout, rng, solver.projector)
        terminal = random_state_vector(solver.layout, rng, solver.projector)
        sources = [np.zeros(solver.state_size)] * solver.n_steps
        assert solver.duality_residual(x0, sources, terminal) < 1e-6

    def test_decoupled_system_matches_standalone_solver(self, grid, coeffs):
        u0 = divergence_free(grid, amplitude=0.3)
        x, _ = grid.coordinates("cell")
        theta0 = Field.scalar(grid, np.cos(np.pi * x / grid.lx))
        forcing = strip_controls(grid)
        linear = solve_linearized(u0, theta0, LinearCoefficients(boundary=coeffs), forcing, t_end=0.1, n_steps=10)
        config = SolverConfig(dt=1e-2, advection=False)
        standalone = BoussinesqSolver(grid, coeffs, config).run(FlowState(0.0, u0, theta0), 0.1, forcing, output_every=10)
        assert np.allclose(linear.final.u.u, standalone.final.u.u, atol=1e-10)
        assert np.allclose(linear.final.u.v, standalone.final.u.v, atol=1e-10)
        assert np.allclose(linear.final.theta.values, standalone.final.theta.values, atol=1e-10)

    def test_adjoint_velocity_stays_zero_without_coupling(self, grid, coeffs):
        x, y = grid.coordinates("cell")
        psi_T = Field.scalar(grid, np.cos(np.pi * x / grid.lx) * np.cos(np.pi * y / grid.ly))
        phi_T = Field.zeros(grid, FieldKind.VECTOR)
        coefficients = self.coefficients(grid, coeffs, with_coupling=False)
        backward = solve_adjoint(phi_T, psi_T, coefficients, t_end=0.05, n_steps=5)
        for state in backward.states:
            assert state.u.max_abs() == 0.0
        assert backward.initial.theta.max_abs() > 0.0

    def test_adjoint_velocity_is_divergence_free(self, grid, coeffs):
        phi_T = divergence_free(grid)
        psi_T = Field.scalar(grid, np.ones(grid.shape("cell")))
        backward = solve_adjoint(phi_T, psi_T, self.coefficients(grid, coeffs), t_end=0.05, n_steps=5)
        for state in backward.states:
            assert np.max(np.abs(divergence(state.u.u, state.u.v, grid))) < 1e-8


class TestStokesLift:
    def test_zero_source_gives_zero_lift(self, grid, coeffs):
        lift = stokes_lift(lambda t: np.zeros(grid.shape("cell")), grid, coeffs, 0.05, SolverConfig(dt=1e-2))
        assert all(u.max_abs() == 0.0 for u in lift.velocity)

    def test_lift_meets_the_source(self, grid, coeffs):
        sigma = strip_source(grid, lambda t: np.sin(np.pi * t / 0.1) ** 2)
        lift = stokes_lift(sigma, grid, coeffs, 0.1, SolverConfig(dt=1e-2))
        assert lift.divergence_residual <= 1e-8
        for t, u in zip(lift.times, lift.velocity):
            assert np.max(np.abs(divergence(u.u, u.v, grid) - sigma(t))) <= 1e-8
        assert lift.max_regularity > 0.0

    def test_steady_oracle_solves_the_stokes_system(self, grid, coeffs):
        sigma = strip_source(grid)(0.0)
        u, p = steady_stokes(sigma, grid, coeffs)
        assert np.max(np.abs(divergence(u.u, u.v, grid) - sigma)) < 1e-8
        assert np.isfinite(p.values).all()

    @pytest.mark.slow
    def test_marched_lift_approaches_steady_solution(self, grid, coeffs):
        source = strip_source(grid)
        config = replace(SolverConfig(dt=2e-3), poisson_tol=1e-12)
        lift = stokes_lift(source, grid, coeffs, 4.0, config, output_every=100)
        steady, _ = steady_stokes(source(0.0), grid, coeffs)
        last, before = lift.velocity[-1], lift.velocity[-2]
        assert (last - before).l2_norm() <= 1e-6 * max(last.l2_norm(), 1.0)
        assert (last - steady).l2_norm() <= 5e-2 * steady.l2_norm()
