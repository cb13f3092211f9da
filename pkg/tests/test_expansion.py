import numpy as np
import pytest

from conftest import divergence_free

from services.base import Direction, Side
from services.config import FlushingConfig, GridConfig
from services.exceptions import MissingProfileError, ValidationError
from services.flushing import (
    Amplitude,
    ReferenceFlow,
    TransportControls,
    build_partition,
    build_reference_flow,
    transport_control,
)
from services.geometry import Box, BoundaryCoefficients, Field, Grid2D
from services.layer import LayerCoefficients, LayerHistory
from services.solver.state import FlowState, ForcingInputs
from services.strategy.sweep import sweep_epsilon
from services.expansion import (
    ExpansionBundle,
    GronwallLedger,
    LayerSampler,
    amplify,
    amplify_temperature,
    assemble_expansion,
    claimed_rate,
    cross_check,
    nonlinear_remainder,
    rate_fit,
    remainder_boundary_data,
    remainder_forcing,
    remainder_norms,
    scale_factor,
    scale_forcing,
    scale_state,
    scaled_time,
    seam_mismatch,
    solve_remainder,
    structural_residual,
    sum_forcing,
)


FAST = FlushingConfig(amplitude_safety=2.0, n_scan=100)


def linear_flow(grid, gradient=((0.0, 0.0), (0.0, 0.0)), horizon=1.0):
    """u0 = a(t) G x, built directly from face values"""
    G = np.asarray(gradient, dtype=float)
    xu, yu = grid.coordinates("u")
    xv, yv = grid.coordinates("v")
    zero = np.zeros(grid.shape("cell"))
    return ReferenceFlow(
        grid=grid,
        horizon=horizon,
        potential=zero,
        shape=zero.copy(),
        gradient=(G[0, 0] * xu + G[0, 1] * yu, G[1, 0] * xv + G[1, 1] * yv),
        amplitude=Amplitude(0.0, horizon, 1.0),
    )


def frozen_transport(grid, theta=None, times=(0.0, 1.0)):
    """(u1, theta1) constant in time with zero velocity"""
    n = len(times)
    theta = np.zeros(grid.shape("cell")) if theta is None else theta
    cells = np.zeros((n,) + grid.shape("cell"))
    return TransportControls(
        grid=grid,
        times=np.asarray(times, dtype=float),
        u=np.zeros((n,) + grid.shape("u")),
        v=np.zeros((n,) + grid.shape("v")),
        theta=np.stack([theta] * n),
        vorticity=np.zeros((n,) + grid.shape("node")),
        control_u=np.zeros((n,) + grid.shape("u")),
        control_v=np.zeros((n,) + grid.shape("v")),
        w=cells.copy(),
        sigma=cells.copy(),
        pressure=cells.copy(),
    )


def quiet_schedules(grid):
    out = {}
    for side in Side:
        s = grid.side_coordinate(side)
        zero = np.zeros(len(s))
        coef = LayerCoefficients(side, s, zero, zero, zero, zero, zero, taper=np.ones(len(s)))
        out[side] = lambda t, c=coef: c
    return out


def zero_layers(grid, z, times=(0.0, 0.5, 1.0)):
    times = np.asarray(times, dtype=float)
    return {
        side: LayerHistory(
            side=side,
            s=grid.side_coordinate(side),
            z=z,
            times=times,
            values=np.zeros((len(times), grid.side_length(side), len(z))),
        )
        for side in Side
    }


def constant_vector(grid, r):
    return Field.vector(grid, np.full(grid.shape("u"), r[0]), np.full(grid.shape("v"), r[1]))


@pytest.fixture
def slip_coeffs(grid):
    return BoundaryCoefficients.uniform(grid, friction=0.0, heat=0.0)


@pytest.fixture
def z_grid():
    return np.linspace(0.0, 20.0, 4001)


@pytest.fixture(scope="module")
def flushed():
    """Reference flow on the 24x16 lab grid and the controls flushing smooth data with it"""
    grid = Grid2D.from_config(GridConfig(nx=24, ny=16))
    flow = build_reference_flow(grid, config=FAST)
    partition = build_partition(flow, squares=[Box(grid.x_gamma + 2 * grid.hx, grid.lx, 0.0, grid.ly)], config=FAST)
    x, y = grid.coordinates("cell")
    theta = np.cos(np.pi * x / grid.lx) * np.cos(np.pi * y / grid.ly)
    transport = transport_control(flow, partition, divergence_free(grid, amplitude=0.1),
                                  Field.scalar(grid, theta), config=FAST, n_steps=20)
    return flow, transport


class TestScaling:
    def test_identity_at_unit_epsilon(self, grid, rng):
        u = Field.vector(grid, rng.standard_normal(grid.shape("u")), rng.standard_normal(grid.shape("v")))
        theta = Field.scalar(grid, rng.standard_normal(grid.shape("cell")))
        state = FlowState(0.3, u, theta)
        scaled = scale_state(state, 1.0)
        assert scaled.t == pytest.approx(0.3)
        assert scaled.minus(state).norm() == pytest.approx(0.0, abs=1e-14)

    def test_round_trip(self, grid, rng):
        u = Field.vector(grid, rng.standard_normal(grid.shape("u")), rng.standard_normal(grid.shape("v")))
        theta = Field.scalar(grid, rng.standard_normal(grid.shape("cell")))
        state = FlowState(0.02, u, theta)
        back = scale_state(scale_state(state, 0.05), 0.05, Direction.BACKWARD)
        assert back.t == pytest.approx(0.02, rel=1e-12)
        assert back.minus(state).norm() <= 1e-12 * state.norm()

    def test_constant_velocity_scales_linearly(self, grid):
        state = FlowState(0.0, constant_vector(grid, (2.0, -1.0)), Field.scalar(grid, np.ones(grid.shape("cell"))))
        scaled = scale_state(state, 0.1)
        np.testing.assert_allclose(scaled.u.u, 0.2)
        np.testing.assert_allclose(scaled.theta.values, 0.01)

    def test_exponents_and_time(self):
        assert scale_factor("w", 0.1) == pytest.approx(1e-3)
        assert scale_factor("sigma", 0.1, Direction.BACKWARD) == pytest.approx(10.0)
        assert scaled_time(0.5, 0.1) == pytest.approx(5.0)
        assert scaled_time(5.0, 0.1, Direction.BACKWARD) == pytest.approx(0.5)

    def test_forcing_reads_original_time(self, grid):
        seen = []

        def v(t):
            seen.append(t)
            return np.ones(grid.shape("u")), np.zeros(grid.shape("v"))

        scaled = scale_forcing(ForcingInputs(v=v), 0.1)
        vu, _ = scaled.velocity(3.0, grid)
        assert seen[-1] == pytest.approx(0.3)
        np.testing.assert_allclose(vu, 0.01)


class TestLayerSampler:
    def test_exponential_at_unit_depth(self, grid, z_grid):
        eps = (2.0 * grid.hx) ** 2
        s = {side: grid.side_coordinate(side) for side in Side}
        sampler = LayerSampler(grid, eps, z_grid, s)
        values = np.tile(np.exp(-z_grid), (grid.side_length(Side.RIGHT), 1))
        sampled = sampler.scalar(Side.RIGHT, values, "u")
        assert sampled[-3, 0] == pytest.approx(np.exp(-1.0), rel=1e-5)
        np.testing.assert_allclose(sampled[-1], 1.0, atol=1e-12)

    def test_matches_profile_at_depth(self, grid, z_grid):
        s = {side: grid.side_coordinate(side) for side in Side}
        sampler = LayerSampler(grid, 0.01, z_grid, s)
        values = np.tile(np.exp(-z_grid), (grid.side_length(Side.BOTTOM), 1))
        sampled = sampler.scalar(Side.BOTTOM, values, "cell")
        np.testing.assert_allclose(sampled, np.exp(-sampler.depth(Side.BOTTOM, "cell")), atol=1e-5)

    def test_points_past_the_grid_are_counted(self, grid):
        z = np.linspace(0.0, 1.0, 11)
        s = {side: grid.side_coordinate(side) for side in Side}
        sampler = LayerSampler(grid, 1e-4, z, s)
        values = np.ones((grid.side_length(Side.LEFT), len(z)))
        sampled = sampler.scalar(Side.LEFT, values, "cell")
        assert sampler.truncated > 0
        assert sampled[-1, 0] == 0.0

    def test_vector_uses_side_tangent(self, grid, z_grid):
        s = {side: grid.side_coordinate(side) for side in Side}
        sampler = LayerSampler(grid, 0.01, z_grid, s)
        values = np.tile(np.exp(-z_grid), (grid.side_length(Side.BOTTOM), 1))
        u, v = sampler.vector(tangential={Side.BOTTOM: values})
        direction = Side.BOTTOM.tangent
        np.testing.assert_allclose(v, 0.0)
        np.testing.assert_allclose(u, direction[0] * sampler.scalar(Side.BOTTOM, values, "u"))


class TestBundle:
    def test_friction_needs_layers(self, grid, coeffs):
        with pytest.raises(MissingProfileError):
            ExpansionBundle("friction", 0.1, coeffs, flow=linear_flow(grid), transport=frozen_transport(grid))

    def test_slip_needs_transport(self, grid, coeffs):
        with pytest.raises(MissingProfileError) as info:
            ExpansionBundle("slip", 0.1, coeffs, flow=linear_flow(grid))
        assert "transport" in info.value.details["missing"]

    def test_layers_must_cover_every_side(self, grid, coeffs, z_grid):
        layers = zero_layers(grid, z_grid)
        layers.pop(Side.TOP)
        with pytest.raises(MissingProfileError):
            ExpansionBundle(
                "friction", 0.1, coeffs, flow=linear_flow(grid), transport=frozen_transport(grid),
                layers=layers, schedules=quiet_schedules(grid),
            )

    def test_rejects_non_positive_epsilon(self, grid, coeffs):
        with pytest.raises(ValidationError):
            ExpansionBundle("slip", 0.0, coeffs, flow=linear_flow(grid), transport=frozen_transport(grid))

    def test_seam_needs_tracking_bundles(self, grid, coeffs):
        bundle = ExpansionBundle("slip", 0.1, coeffs, flow=linear_flow(grid), transport=frozen_transport(grid))
        with pytest.raises(ValidationError):
            seam_mismatch(bundle, bundle, 0.0)


class TestAssembly:
    def test_zero_profiles_give_zero_fields(self, grid, coeffs):
        bundle = ExpansionBundle("slip", 0.1, coeffs, flow=linear_flow(grid), transport=frozen_transport(grid))
        state = assemble_expansion(bundle, 0.5)
        assert state.norm() == 0.0

    def test_slip_sums_reference_and_transport(self, grid, coeffs):
        flow = linear_flow(grid, ((1.0, 0.0), (0.0, -1.0)))
        theta = np.full(grid.shape("cell"), 3.0)
        bundle = ExpansionBundle("slip", 0.1, coeffs, flow=flow, transport=frozen_transport(grid, theta))
        state = assemble_expansion(bundle, 0.5)
        u0, _ = flow.velocity(0.5)
        np.testing.assert_allclose(state.u.u, u0)
        np.testing.assert_allclose(state.theta.values, 0.03)

    def test_friction_with_quiet_layers_matches_slip(self, grid, coeffs, z_grid):
        flow = linear_flow(grid, ((1.0, 0.0), (0.0, -1.0)))
        transport = frozen_transport(grid, np.ones(grid.shape("cell")))
        slip = ExpansionBundle("slip", 0.05, coeffs, flow=flow, transport=transport)
        friction = ExpansionBundle(
            "friction", 0.05, coeffs, flow=flow, transport=transport,
            layers=zero_layers(grid, z_grid), schedules=quiet_schedules(grid),
        )
        a = assemble_expansion(slip, 0.4)
        b = assemble_expansion(friction, 0.4)
        assert a.minus(b).norm() <= 1e-10 * max(a.norm(), 1.0)


class TestRemainderForcing:
    def test_zero_profiles_give_zero_forcing(self, grid, slip_coeffs):
        bundle = ExpansionBundle("slip", 0.1, slip_coeffs, flow=linear_flow(grid), transport=frozen_transport(grid))
        forcing = remainder_forcing(bundle, 0.3)
        assert np.max(np.abs(forcing.f[0])) == 0.0
        assert np.max(np.abs(forcing.f[1])) == 0.0
        assert np.max(np.abs(forcing.h)) == 0.0
        assert all(np.max(np.abs(v)) == 0.0 for v in forcing.navier.values())
        assert all(np.max(np.abs(v)) == 0.0 for v in forcing.robin.values())

    def test_slip_buoyancy_block(self, grid, slip_coeffs):
        theta = np.full(grid.shape("cell"), 2.0)
        bundle = ExpansionBundle("slip", 0.1, slip_coeffs, flow=linear_flow(grid), transport=frozen_transport(grid, theta))
        forcing = remainder_forcing(bundle, 0.3)
        np.testing.assert_allclose(forcing.f[0], 0.0, atol=1e-14)
        np.testing.assert_allclose(forcing.f[1], 0.2, rtol=1e-12)
        np.testing.assert_allclose(forcing.h, 0.0, atol=1e-12)

    def test_quiet_friction_layers_need_two_levels(self, grid, coeffs, z_grid):
        bundle = ExpansionBundle(
            "friction", 0.05, coeffs, flow=linear_flow(grid), transport=frozen_transport(grid),
            layers=zero_layers(grid, z_grid, times=(0.0,)), schedules=quiet_schedules(grid),
        )
        with pytest.raises(MissingProfileError):
            remainder_forcing(bundle, 0.0)

    def test_quiet_friction_layers_give_slip_forcing(self, grid, coeffs, z_grid):
        theta = np.full(grid.shape("cell"), 2.0)
        transport = frozen_transport(grid, theta)
        bundle = ExpansionBundle(
            "friction", 0.05, coeffs, flow=linear_flow(grid), transport=transport,
            layers=zero_layers(grid, z_grid), schedules=quiet_schedules(grid),
        )
        forcing = remainder_forcing(bundle, 0.25)
        np.testing.assert_allclose(forcing.f[0], 0.0, atol=1e-12)
        np.testing.assert_allclose(forcing.f[1], 0.1, rtol=1e-10)

    def test_slip_boundary_data_vanish_for_still_profiles(self, grid, slip_coeffs):
        bundle = ExpansionBundle("slip", 0.1, slip_coeffs, flow=linear_flow(grid), transport=frozen_transport(grid))
        navier, robin = remainder_boundary_data(bundle, 0.0)
        assert set(navier) == set(Side)
        assert all(np.all(v == 0.0) for v in navier.values())


class TestAmplification:
    def test_slip_hand_value(self, grid, coeffs):
        G = np.array([[0.5, 2.0], [-1.0, 0.25]])
        flow = linear_flow(grid, G)
        bundle = ExpansionBundle("slip", 0.1, coeffs, flow=flow, transport=frozen_transport(grid))
        r = np.array([0.3, -0.7])
        au, av = amplify(bundle, 0.5, constant_vector(grid, r))
        a = flow.amplitude(0.5) * flow.strength
        expected = a * (G @ r)
        np.testing.assert_allclose(au, expected[0], rtol=1e-10, atol=1e-10)
        np.testing.assert_allclose(av, expected[1], rtol=1e-10, atol=1e-10)

    def test_linear_in_r(self, grid, coeffs, rng):
        flow = linear_flow(grid, ((1.0, 0.5), (0.5, -1.0)))
        bundle = ExpansionBundle("slip", 0.1, coeffs, flow=flow, transport=frozen_transport(grid))

        def random_field():
            return Field.vector(grid, rng.standard_normal(grid.shape("u")), rng.standard_normal(grid.shape("v")))

        r1, r2, alpha = random_field(), random_field(), 1.7
        combined = amplify(bundle, 0.5, alpha * r1 + r2)
        a1, a2 = amplify(bundle, 0.5, r1), amplify(bundle, 0.5, r2)
        for c in range(2):
            np.testing.assert_allclose(combined[c], alpha * a1[c] + a2[c], rtol=1e-12, atol=1e-12)

    def test_grid_route_agrees_for_slip(self, grid, coeffs):
        flow = linear_flow(grid, ((1.0, 0.0), (0.0, -1.0)))
        bundle = ExpansionBundle("slip", 0.1, coeffs, flow=flow, transport=frozen_transport(grid))
        r = constant_vector(grid, (1.0, 1.0))
        literal = amplify(bundle, 0.5, r)
        gridded = amplify(bundle, 0.5, r, route="grid")
        for c in range(2):
            np.testing.assert_allclose(literal[c], gridded[c], atol=1e-12)

    def test_unknown_route(self, grid, coeffs):
        bundle = ExpansionBundle("slip", 0.1, coeffs, flow=linear_flow(grid), transport=frozen_transport(grid))
        with pytest.raises(ValidationError):
            amplify(bundle, 0.0, constant_vector(grid, (1.0, 0.0)), route="spectral")

    def test_temperature_operator(self, grid, coeffs):
        x, _ = grid.coordinates("cell")
        bundle = ExpansionBundle("slip", 0.1, coeffs, flow=linear_flow(grid), transport=frozen_transport(grid, 3.0 * x))
        out = amplify_temperature(bundle, 0.5, constant_vector(grid, (2.0, 5.0)))
        np.testing.assert_allclose(out, 0.1 * 2.0 * 3.0, rtol=1e-10)


class TestRemainderSolve:
    def test_zero_data_give_zero_remainder(self, grid, slip_coeffs):
        bundle = ExpansionBundle("slip", 0.1, slip_coeffs, flow=linear_flow(grid), transport=frozen_transport(grid))
        run = solve_remainder(bundle, horizon=0.1, dt=0.05)
        assert len(run.trajectory.states) == 3
        assert run.sup_norm() == 0.0
        assert run.ledger.respected()

    def test_structural_residual_of_still_expansion(self, grid, slip_coeffs):
        bundle = ExpansionBundle("slip", 0.1, slip_coeffs, flow=linear_flow(grid), transport=frozen_transport(grid))
        assert structural_residual(bundle, 0.5) == 0.0

    def test_structural_residual_shrinks_with_epsilon(self, flushed):
        flow, transport = flushed
        coeffs = BoundaryCoefficients.uniform(flow.grid, friction=0.0, heat=0.0)
        t = 0.3 * flow.horizon
        coarse = structural_residual(ExpansionBundle("slip", 0.1, coeffs, flow=flow, transport=transport), t)
        fine = structural_residual(ExpansionBundle("slip", 0.01, coeffs, flow=flow, transport=transport), t)
        assert 0.0 < coarse < 0.5
        assert fine <= 0.3 * coarse


class TestCrossCheck:
    @staticmethod
    def warm_bundle(grid, eps):
        """Still u0 and a frozen theta1 whose buoyancy is not a gradient"""
        x, y = grid.coordinates("cell")
        theta = np.cos(np.pi * x / grid.lx) * np.cos(np.pi * y / grid.ly)
        coeffs = BoundaryCoefficients.uniform(grid, friction=0.0, heat=0.0)
        return ExpansionBundle("slip", eps, coeffs, flow=linear_flow(grid), transport=frozen_transport(grid, theta))

    def test_nonlinear_run_matches_direct_solve(self, grid):
        bundle = self.warm_bundle(grid, 0.1)
        direct = solve_remainder(bundle, horizon=0.2, dt=0.02)
        indirect = nonlinear_remainder(bundle, horizon=0.2, dt=0.02, output_every=2)
        assert len(indirect.states) == 6
        assert direct.sup_norm() > 0.0
        assert cross_check(direct.trajectory, indirect) <= 1e-2

    def test_cross_check_of_identical_runs(self, grid):
        run = solve_remainder(self.warm_bundle(grid, 0.1), horizon=0.1, dt=0.02)
        assert cross_check(run.trajectory, run.trajectory) == 0.0

    @pytest.mark.asyncio
    async def test_slip_sweep_rate_and_cross_check(self, grid):
        result = await sweep_epsilon(
            [0.2, 0.1, 0.05, 0.025],
            lambda eps: remainder_norms(self.warm_bundle(grid, eps), 0.2, 0.02),
            {"remainder": 1.0},
        )
        assert not result.failures
        assert all(row.norms["cross_check"] <= 1e-2 for row in result.rows)
        assert result.fits["remainder"].slope >= 0.8


class TestGronwallLedger:
    def test_running_integrals(self):
        ledger = GronwallLedger(epsilon=0.1)
        ledger.record(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
        ledger.record(0.5, 0.5, 1.9, 1.0, 1.0, 0.2)
        ledger.record(1.0, 0.5, 1.9, 1.0, 1.0, 0.1)
        assert ledger.amplification[-1] == pytest.approx(2.0)
        assert ledger.forcing[-1] == pytest.approx(2.0)
        assert ledger.measured[-1] == pytest.approx(0.2)
        assert ledger.bound()[-1] == pytest.approx(4.0 * np.exp(4.0))
        assert ledger.respected()


class TestRateFit:
    def test_exact_power(self):
        eps = np.array([0.1, 0.05, 0.025, 0.0125, 0.001])
        fit = rate_fit(eps, 3.0 * eps ** 0.25, claimed=0.25)
        assert fit.slope == pytest.approx(0.25, abs=1e-12)
        assert fit.meets_claim
        assert fit.monotone

    def test_oscillating_power(self):
        eps = np.geomspace(1e-4, 1e-1, 12)
        norms = 2.0 * eps ** 0.25 * (1.0 + 0.1 * np.sin(np.log(eps)))
        fit = rate_fit(eps, norms)
        assert abs(fit.slope - 0.25) <= 0.05

    def test_needs_three_values(self):
        with pytest.raises(ValidationError):
            rate_fit([0.1, 0.01], [1.0, 0.5])

    def test_non_monotone_is_flagged(self):
        fit = rate_fit([0.1, 0.01, 0.001], [1.0, 2.0, 0.1])
        assert not fit.monotone
        assert any("monotone" in w for w in fit.warnings)

    def test_short_span_warns(self):
        eps = np.array([0.1, 0.05, 0.025, 0.0125])
        fit = rate_fit(eps, eps)
        assert fit.decades < 1.0
        assert fit.slope == pytest.approx(1.0)
        assert fit.warnings

    def test_claimed_rates_by_mode(self):
        rates = {"slip": 1.0, "friction": 0.25}
        assert claimed_rate("slip", rates) == 1.0
        assert claimed_rate("tracking-phase-2", rates) == 0.25
        assert claimed_rate("other", rates) is None


class TestSumForcing:
    def test_pointwise_sum(self, grid):
        a = ForcingInputs(v=lambda t: (np.ones(grid.shape("u")), np.zeros(grid.shape("v"))))
        b = ForcingInputs(
            v=lambda t: (t * np.ones(grid.shape("u")), np.ones(grid.shape("v"))),
            w=lambda t: np.full(grid.shape("cell"), 2.0),
        )
        total = sum_forcing(a, b, ForcingInputs.zero())
        vu, vv = total.velocity(3.0, grid)
        np.testing.assert_allclose(vu, 4.0)
        np.testing.assert_allclose(vv, 1.0)
        np.testing.assert_allclose(total.temperature(0.0, grid), 2.0)
        assert total.sigma is None

    def test_empty_sum_is_zero(self):
        assert sum_forcing().is_zero()
