from dataclasses import replace

import numpy as np
import pytest

from conftest import divergence_free
from services.base import FieldKind
from services.carleman import (
    CarlemanIntegrals,
    HeatSurrogate1D,
    build_weights,
    carleman_functional,
    carleman_integrals,
    carleman_quotient,
    check_symmetric_jacobian,
    corner_zone,
    gramian_oracle,
    hum_control,
    hum_solve,
    local_fixed_point,
    sobolev_proxy,
)
from services.config import CarlemanConfig, HUMConfig
from services.exceptions import ValidationError
from services.geometry import BoundaryCoefficients, Field
from services.geometry.boundary import BoundaryNonlinearity
from services.geometry.grid import Box
from services.solver import FlowState, LinearCoefficients, LinearizedSolver


@pytest.fixture
def weights(grid):
    return build_weights(grid, 1.0, CarlemanConfig())


@pytest.fixture
def surrogate():
    t = (np.arange(40) + 0.5) / 40
    kinv = 0.2 + np.sin(np.pi * t) ** 2
    return HeatSurrogate1D(points=20, n_steps=40, horizon=0.5, kappa_inverse=kinv)


def tight():
    return HUMConfig(tol=1e-12, max_iter=200, stagnation_window=60)


class TestWeights:
    def test_alpha_on_the_boundary(self, weights):
        zero = np.zeros_like(weights.eta)
        for t in (0.1, 0.5, 0.8):
            assert np.allclose(weights.alpha(t, zero), weights.alpha_star(t))

    def test_mid_window_is_the_time_minimum(self, weights):
        middle = weights.alpha(0.5)
        for t in np.linspace(0.05, 0.95, 19):
            assert np.all(middle <= weights.alpha(t) * (1.0 + 1e-12))

    def test_monotone_in_eta(self, weights, rng):
        eta = np.sort(rng.uniform(0.0, 1.0, 1000))
        assert np.all(np.diff(weights.alpha(0.3, eta)) <= 0.0)
        assert np.all(np.diff(weights.xi(0.3, eta)) >= 0.0)

    def test_extrema_bracket_the_fields(self, weights):
        t = 0.4
        assert np.max(weights.alpha(t)) <= weights.alpha_star(t)
        assert np.min(weights.alpha(t)) >= weights.alpha_hat(t) * (1.0 - 1e-12)
        assert np.min(weights.xi(t)) >= weights.xi_star(t)
        assert np.max(weights.xi(t)) <= weights.xi_hat(t) * (1.0 + 1e-12)

    def test_eta_vanishes_towards_the_walls(self, weights):
        assert np.all(weights.eta > 0.0)
        assert np.max(weights.eta) == pytest.approx(1.0)
        assert np.max(weights.eta[0, :]) < 0.2
        assert np.max(weights.eta[:, -1]) < 0.2

    def test_control_weight_vanishes_at_the_ends(self, weights):
        assert weights.kappa_inverse(0.0) == 0.0
        assert weights.kappa_inverse(1.0) == 0.0
        assert weights.kappa_inverse(0.5) == pytest.approx(1.0)
        assert weights.kappa_inverse(1e-3) < 1e-100
        assert weights.diagnostics.values["kappa_exponent_gap"] > 0.0
        assert np.all(weights.control_weights(20) > 0.0)

    def test_kappa_inverse_peaks_mid_window(self, weights):
        t = np.linspace(0.02, 0.98, 49)
        values = weights.log_kappa_inverse(t)
        assert np.argmax(values) == 24

    def test_region_must_be_interior(self, grid):
        with pytest.raises(ValidationError):
            build_weights(grid, 1.0, region=Box(0.0, 0.5, 0.2, 0.4))

    def test_gradient_floor_holds_off_the_corners(self, grid, weights):
        size = np.hypot(*weights.eta_gradient)
        x, y = grid.coordinates("cell")
        config = CarlemanConfig()
        checked = ~weights.region.contains(x, y) & ~corner_zone(grid, config.corner_exclusion)
        assert np.min(size[checked]) > config.gradient_floor * np.max(size)
        assert weights.diagnostics.values["min_gradient_ratio"] > config.gradient_floor

    def test_gradient_vanishes_towards_the_corners(self, grid, weights):
        size = np.hypot(*weights.eta_gradient)
        corners = [size[0, 0], size[0, -1], size[-1, 0], size[-1, -1]]
        assert max(corners) < 0.2 * np.max(size)
        assert corner_zone(grid, CarlemanConfig().corner_exclusion)[0, 0]

    def test_gradient_floor_violation_lists_cells(self, grid):
        with pytest.raises(ValidationError) as info:
            build_weights(grid, 1.0, CarlemanConfig(gradient_floor=0.99))
        assert info.value.details["count"] > 0
        assert info.value.details["cells"]


class TestFunctional:
    def test_zero_trajectory(self, weights, grid):
        states = [
            FlowState(t, Field.zeros(grid, FieldKind.VECTOR, t), Field.zeros(grid, FieldKind.SCALAR, t))
            for t in np.linspace(0.0, 1.0, 11)
        ]
        assert carleman_functional(weights, states) == 0.0
        assert carleman_functional(weights, states, part="temperature") == 0.0

    def test_lambda_prefactor(self):
        integrals = CarlemanIntegrals(1.0, 2.0, 3.0)
        low = integrals.terms(0.5, 2.0)
        high = integrals.terms(0.5, 4.0)
        assert high["zero_order"] == pytest.approx(16.0 * low["zero_order"])
        assert high["first_order"] == pytest.approx(4.0 * low["first_order"])
        assert high["second_order"] == low["second_order"]

    def test_time_quadrature_refinement(self, weights, grid):
        x, y = grid.coordinates("cell")
        mode = np.sin(np.pi * x / grid.lx) * np.sin(np.pi * y / grid.ly)
        coarse_t = np.linspace(0.0, 1.0, 201)
        fine_t = np.linspace(0.0, 1.0, 2001)
        coarse = carleman_integrals(weights, coarse_t, [mode] * coarse_t.size)
        fine = carleman_integrals(weights, fine_t, [mode] * fine_t.size)
        assert coarse.value(weights.s, weights.lam) == pytest.approx(fine.value(weights.s, weights.lam), rel=1e-2)
        assert fine.zero_order > 0.0


class TestQuotient:
    def solver(self, grid, n_steps=8):
        coefficients = LinearCoefficients(boundary=BoundaryCoefficients.uniform(grid, 0.0, 0.0))
        return LinearizedSolver(grid, coefficients, n_steps, 1.0 / n_steps)

    def test_zero_data_is_skipped(self, weights, grid):
        solver = self.solver(grid)
        report = carleman_quotient(weights, solver, terminal=[np.zeros(solver.state_size)])
        assert report.skipped == 1
        assert report.max_quotient is None

    def test_random_ensemble_is_finite(self, weights, grid):
        report = carleman_quotient(weights, self.solver(grid), samples=3, seed=7)
        assert report.skipped == 0
        assert np.isfinite(report.max_quotient)
        assert report.max_quotient > 0.0

    def test_quotient_is_reproducible(self, weights, grid):
        first = carleman_quotient(weights, self.solver(grid), samples=2, seed=11)
        second = carleman_quotient(weights, self.solver(grid), samples=2, seed=11)
        assert first.max_quotient == second.max_quotient


class TestHUM:
    def test_zero_data_gives_zero_controls(self, surrogate):
        solution = hum_solve(surrogate, np.zeros(surrogate.state_size), penalty=1e-3)
        assert solution.cost == 0.0
        assert not np.any(solution.controls)

    def test_matches_gramian_oracle(self, surrogate):
        x0 = surrogate.mode(1) + 0.5 * surrogate.mode(2)
        solution = hum_solve(surrogate, x0, penalty=1e-2, config=tight())
        oracle = gramian_oracle(surrogate, x0, 1e-2)
        gap = np.linalg.norm(solution.controls - oracle.controls) / np.linalg.norm(oracle.controls)
        assert gap < 1e-6
        assert solution.cost == pytest.approx(oracle.cost, rel=1e-8)

    def test_optimality_identity_and_terminal_bound(self, surrogate):
        solution = hum_solve(surrogate, surrogate.mode(1), penalty=1e-3, config=tight())
        assert solution.optimality_residual <= 1e-12
        assert solution.terminal_norm <= solution.terminal_bound * (1.0 + 1e-10)
        assert solution.reduction < 1.0

    def test_dual_cost_decreases(self, surrogate):
        solution = hum_solve(surrogate, surrogate.mode(1), penalty=1e-3, config=tight())
        dual = np.array([row.dual_cost for row in solution.iterations])
        assert len(dual) > 1
        assert np.all(np.diff(dual) <= 1e-12 * np.max(np.abs(dual)))

    def test_weights_shape_is_checked(self, surrogate):
        with pytest.raises(ValidationError):
            hum_solve(surrogate, surrogate.mode(1), penalty=1e-3, kappa_inverse=np.ones(3))

    def test_stagnation_returns_flagged_iterate(self, surrogate):
        solution = hum_solve(surrogate, surrogate.mode(1), penalty=1e-8, config=HUMConfig(tol=1e-30, max_iter=3))
        assert not solution.converged
        assert solution.diagnostics.warnings
        assert len(solution.iterations) == 3

    def test_zero_data_on_the_coupled_system(self, grid, weights):
        coefficients = LinearCoefficients(boundary=BoundaryCoefficients.uniform(grid, 0.5, 0.5))
        solution = hum_control(Field.zeros(grid, FieldKind.VECTOR), Field.zeros(grid, FieldKind.SCALAR),
                               coefficients, weights, HUMConfig(time_steps=4))
        assert solution.cost == 0.0
        assert solution.trajectory.final.norm() == 0.0

    @pytest.mark.slow
    def test_coupled_terminal_reduction(self, weights):
        from services.config import GridConfig
        from services.geometry import Grid2D

        grid = Grid2D.from_config(GridConfig(nx=24, ny=24))
        weights = build_weights(grid, 1.0)
        z0 = divergence_free(grid, amplitude=0.1)
        x, _ = grid.coordinates("cell")
        h0 = Field.scalar(grid, 0.1 * np.cos(np.pi * x / grid.lx))
        coefficients = LinearCoefficients(boundary=BoundaryCoefficients.uniform(grid, 0.5, 0.5))
        solution = hum_control(z0, h0, coefficients, weights, HUMConfig(penalty=1e-6, time_steps=40))
        assert solution.reduction <= 1e-2


class TestGramianOracle:
    def test_large_penalty_gives_zero_control(self, surrogate):
        oracle = gramian_oracle(surrogate, surrogate.mode(1), 1e12)
        assert np.max(np.abs(oracle.controls)) < 1e-8

    def test_controls_are_odd(self, surrogate):
        x0 = surrogate.mode(1) - 0.3 * surrogate.mode(3)
        plus = gramian_oracle(surrogate, x0, 1e-3)
        minus = gramian_oracle(surrogate, -x0, 1e-3)
        assert np.allclose(minus.controls, -plus.controls, rtol=1e-10, atol=1e-14)

    def test_halving_penalty_does_not_raise_terminal_norm(self, surrogate):
        x0 = surrogate.mode(1)
        norms = [np.linalg.norm(gramian_oracle(surrogate, x0, p).terminal_state) for p in (1e-2, 5e-3, 2.5e-3)]
        assert norms[1] <= norms[0] * (1.0 + 1e-10)
        assert norms[2] <= norms[1] * (1.0 + 1e-10)


class TestFixedPoint:
    def config(self):
        return HUMConfig(penalty=1e-1, tol=1e-3, max_iter=60, stagnation_window=60, time_steps=6,
                         fixed_point_terminal_tol=1.0)

    def initial(self, grid, amplitude=1e-2):
        x, _ = grid.coordinates("cell")
        theta = Field.scalar(grid, amplitude * np.cos(np.pi * x / grid.lx))
        return FlowState(0.0, divergence_free(grid, amplitude=amplitude), theta)

    def test_linear_walls_need_one_pass(self, grid, weights):
        coeffs = BoundaryCoefficients.uniform(grid, 0.5, 0.5)
        initial = self.initial(grid)
        result = local_fixed_point(initial, coeffs, BoundaryNonlinearity.none(), weights, config=self.config(),
                                   convection=False)
        plain = hum_control(initial.u, initial.theta, LinearCoefficients(boundary=coeffs), weights, self.config())
        assert result.iterations == 1
        assert result.converged
        assert np.allclose(result.solution.controls, plain.controls)

    def test_constant_jacobian_settles_in_two_passes(self, grid, weights):
        coeffs = BoundaryCoefficients.uniform(grid, 0.5, 0.5)
        result = local_fixed_point(self.initial(grid), coeffs, BoundaryNonlinearity.linear(1.0, 1.0), weights,
                                   config=self.config(), convection=False)
        assert result.iterations <= 2
        assert result.converged

    def test_unreached_terminal_norm_is_not_convergence(self, grid, weights):
        coeffs = BoundaryCoefficients.uniform(grid, 0.5, 0.5)
        config = replace(self.config(), fixed_point_terminal_tol=1e-12)
        result = local_fixed_point(self.initial(grid), coeffs, BoundaryNonlinearity.none(), weights, config=config,
                                   convection=False)
        assert result.iterations == 1
        assert not result.converged

    def test_previous_iterate_is_carried_as_transport(self, grid, weights):
        coeffs = BoundaryCoefficients.uniform(grid, 0.5, 0.5)
        config = replace(self.config(), tol=1e-10)
        result = local_fixed_point(self.initial(grid), coeffs, BoundaryNonlinearity.none(), weights, config=config)
        assert result.iterations >= 2
        assert result.distances[0] > 0.0
        assert result.converged
        assert result.distances[-1] < config.fixed_point_tol

    def test_smallness_is_enforced(self, grid, weights):
        coeffs = BoundaryCoefficients.uniform(grid, 0.5, 0.5)
        with pytest.raises(ValidationError):
            local_fixed_point(self.initial(grid), coeffs, BoundaryNonlinearity.none(), weights, delta=1e-12)

    def test_asymmetric_jacobian_is_rejected(self):
        law = BoundaryNonlinearity(
            f=lambda u: u,
            jacobian=lambda u: np.broadcast_to(np.array([[0.0, 1.0], [0.0, 0.0]]), u.shape[:-1] + (2, 2)).copy(),
            g=lambda t: t,
            g_prime=lambda t: np.ones_like(t),
        )
        with pytest.raises(ValidationError):
            check_symmetric_jacobian(law)
        assert check_symmetric_jacobian(BoundaryNonlinearity.cubic()) < 1e-12

    def test_sobolev_proxy(self, grid):
        zero = Field.zeros(grid, FieldKind.VECTOR)
        assert sobolev_proxy(zero, Field.zeros(grid, FieldKind.SCALAR)) == 0.0
        ones = Field.scalar(grid, np.ones((grid.nx, grid.ny)))
        assert sobolev_proxy(zero, ones) == pytest.approx(np.sqrt(grid.lx * grid.ly))

    @pytest.mark.slow
    def test_cubic_laws_converge(self):
        from services.config import GridConfig
        from services.geometry import Grid2D

        grid = Grid2D.from_config(GridConfig(nx=24, ny=24))
        weights = build_weights(grid, 1.0)
        delta = 1e-2
        coeffs = BoundaryCoefficients.uniform(grid, 0.5, 0.5)
        result = local_fixed_point(self.initial(grid, amplitude=2e-3), coeffs, BoundaryNonlinearity.cubic(), weights,
                                   config=HUMConfig(penalty=1e-6, time_steps=40), delta=delta)
        assert result.iterations <= 8
        assert result.terminal_norm <= 1e-2 * delta
