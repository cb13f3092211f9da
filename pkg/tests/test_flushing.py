from dataclasses import replace

import numpy as np
import pytest

from services.config import FlushingConfig, GridConfig
from services.exceptions import FlushingError, PartitionError
from services.flushing import (
    Amplitude,
    FlushPartition,
    build_partition,
    build_reference_flow,
    cutoff,
    cutoff_derivative,
    exact_transport_control,
    flow_map,
    steady_exit_times,
    strip_squares,
    transport_control,
    verify_flushing,
)
from services.flushing.partition import greedy_cover
from services.flushing.flowmap import default_seeds
from services.geometry import Field, Grid2D
from services.geometry.grid import Box


FAST = FlushingConfig(amplitude_safety=2.0, n_scan=100)


class UniformFlow:
    """Constant carrier used to check the particle tools against closed forms"""

    def __init__(self, grid, speed=(0.5, 0.0), horizon=1.0):
        self.grid = grid
        self.horizon = horizon
        self.speed = np.asarray(speed, dtype=float)

    def velocity_at(self, t, points):
        return np.broadcast_to(self.speed, np.shape(points)).copy()


def whole_strip(grid):
    return [Box(grid.x_gamma + 2 * grid.hx, grid.lx, 0.0, grid.ly)]


@pytest.fixture(scope="module")
def lab_grid():
    return Grid2D.from_config(GridConfig(nx=24, ny=16))


@pytest.fixture(scope="module")
def flow(lab_grid):
    return build_reference_flow(lab_grid, config=FAST)


@pytest.fixture(scope="module")
def partition(flow):
    return build_partition(flow, squares=whole_strip(flow.grid), config=FAST)


class TestAmplitude:
    def test_mass_and_support(self):
        a = Amplitude(0.1, 0.6, 2.0)
        assert a(0.05) == 0.0 and a(0.7) == 0.0
        assert a.cumulative(0.0) == 0.0
        assert a.cumulative(1.0) == pytest.approx(2.0)
        assert a(0.35) > 0.0

    def test_inverse_cumulative(self):
        a = Amplitude(0.1, 0.6, 2.0)
        t = a.inverse_cumulative(1.0)
        assert 0.1 < t < 0.6
        assert a.cumulative(t) == pytest.approx(1.0, abs=1e-3)
        assert a.inverse_cumulative(0.0) == 0.0
        assert np.isinf(a.inverse_cumulative(2.5))

    def test_mirrored_support(self):
        a = Amplitude(0.1, 0.6, 2.0).mirrored(1.0)
        assert (a.t0, a.t1) == pytest.approx((0.4, 0.9))


class TestReferenceFlow:
    def test_potential_flow_is_irrotational_and_tangent(self, flow):
        assert flow.curl_residual() <= 1e-10 * max(flow.speed_scale, 1.0)
        assert flow.normal_trace() == 0.0

    def test_sigma_vanishes_on_physical_domain(self, flow):
        t = 0.5 * flow.horizon
        assert np.all(flow.sigma(t)[flow.grid.physical_cells] == 0.0)
        assert np.max(np.abs(flow.sigma(t))) > 0.0

    def test_flow_rests_at_both_ends(self, flow):
        for t in (0.0, flow.horizon):
            u, v = flow.velocity(t)
            assert np.all(u == 0.0) and np.all(v == 0.0)

    def test_every_cell_leaves_in_time(self, flow):
        report = verify_flushing(flow)
        assert report.passed
        assert report.max_exit_time < flow.horizon
        assert report.slowest_path is not None

    def test_zero_mass_does_not_flush(self, lab_grid):
        with pytest.raises(FlushingError):
            build_reference_flow(lab_grid, config=FAST, mass=0.0)

    def test_short_amplitude_support_still_flushes(self, flow):
        short = flow.with_amplitude((0.0, 0.1 * flow.horizon))
        assert verify_flushing(short).passed

    def test_doubled_strength_halves_exit_pseudo_time(self, flow):
        base = steady_exit_times(flow)
        fast = steady_exit_times(replace(flow, strength=2.0 * flow.strength))
        assert np.max(fast) == pytest.approx(0.5 * np.max(base), rel=0.1)

    def test_seeds_in_strip_exit_immediately(self, flow):
        grid = flow.grid
        seeds = np.array([[grid.x_gamma + 0.2, 0.5], [grid.lx - 0.01, 0.3]])
        assert np.all(steady_exit_times(flow, seeds) == 0.0)


class TestFlowMap:
    def test_uniform_flow_translates_points(self, grid):
        carrier = UniformFlow(grid, speed=(0.2, 0.0))
        points = np.array([[0.3, 0.4], [0.7, 0.6]])
        moved = flow_map(carrier, 0.5, 0.0, points)
        assert np.allclose(moved, points + np.array([0.1, 0.0]), atol=1e-12)

    def test_round_trip_returns_to_start(self, flow):
        points = np.array([[0.5, 0.5], [0.3, 0.7], [0.8, 0.3]])
        there = flow_map(flow, 0.2, 0.0, points)
        back = flow_map(flow, 0.0, 0.2, there)
        assert np.max(np.abs(back - points)) < 1e-3

    def test_group_property(self, flow):
        points = np.array([[0.5, 0.5], [0.3, 0.7]])
        direct = flow_map(flow, 0.25, 0.0, points)
        staged = flow_map(flow, 0.25, 0.15, flow_map(flow, 0.15, 0.0, points))
        assert np.max(np.abs(direct - staged)) < 1e-3


class TestCutoff:
    def test_plateaus_and_midpoint(self):
        assert cutoff(-0.2, 0.1) == 1.0
        assert cutoff(-0.1, 0.1) == 1.0
        assert cutoff(0.1, 0.1) == 0.0
        assert cutoff(0.5, 0.1) == 0.0
        assert cutoff(0.0, 0.1) == pytest.approx(0.5)

    def test_monotone_decreasing(self):
        values = cutoff(np.linspace(-0.2, 0.2, 401), 0.1)
        assert np.all(np.diff(values) <= 0.0)

    def test_derivative_matches_finite_difference(self):
        s = np.linspace(-0.09, 0.09, 19)
        step = 1e-6
        numeric = (cutoff(s + step, 0.1) - cutoff(s - step, 0.1)) / (2 * step)
        assert np.allclose(cutoff_derivative(s, 0.1), numeric, rtol=1e-4, atol=1e-6)
        assert cutoff_derivative(0.15, 0.1) == 0.0


class TestPartition:
    def test_strip_squares_cover_the_strip(self, grid):
        squares = strip_squares(grid)
        assert len(squares) == 4
        for box in squares:
            assert box.width == pytest.approx(0.375)
            assert box.x0 == pytest.approx(grid.x_gamma + 2 * grid.hx)
        assert squares[0].y0 == pytest.approx(0.0)
        assert squares[-1].y1 == pytest.approx(grid.ly)

    def test_greedy_cover_reaches_every_point(self, grid):
        points = default_seeds(grid)
        centers = greedy_cover(points, 0.1)
        distance = np.min(np.linalg.norm(points[:, None, :] - centers[None, :, :], axis=2), axis=1)
        assert np.all(distance < 0.1)

    def test_weights_sum_to_one_on_physical_domain(self, grid):
        radius = 0.1
        centers = greedy_cover(default_seeds(grid), radius)
        partition = FlushPartition(
            grid=grid, horizon=1.0, centers=centers, radius=radius,
            times=np.full(len(centers), 0.5), half_width=0.1, squares=strip_squares(grid),
            square_index=np.zeros(len(centers), dtype=int), sojourns=np.zeros((len(centers), 2)),
            exterior_half_width=0.01,
        )
        assert partition.partition_error() < 1e-12
        eta, ext = partition.weights("cell")
        assert np.allclose(eta.sum(axis=0) + ext, 1.0)

    def test_uniform_flow_window(self, grid):
        carrier = UniformFlow(grid, speed=(0.5, 0.0))
        partition = build_partition(
            carrier,
            squares=[Box(1.05, 1.3, 0.1, 0.9)],
            centers=np.array([[0.8, 0.5]]),
            radius=0.05,
            margin=0.0,
        )
        assert partition.sojourns[0] == pytest.approx((0.6, 0.9), abs=5e-3)
        assert partition.times[0] == pytest.approx(0.75, abs=5e-3)
        assert partition.half_width == pytest.approx(0.15, abs=5e-3)

    def test_ball_missing_every_square_is_rejected(self, grid):
        carrier = UniformFlow(grid, speed=(0.5, 0.0))
        with pytest.raises(PartitionError):
            build_partition(
                carrier,
                squares=[Box(1.05, 1.3, 0.8, 0.95)],
                centers=np.array([[0.8, 0.5]]),
                radius=0.05,
                margin=0.0,
            )

    def test_reference_flow_partition_windows_fit_the_horizon(self, partition, flow):
        assert partition.half_width > 0.0
        assert np.all(partition.times - partition.half_width >= 0.0)
        assert np.all(partition.times + partition.half_width <= flow.horizon + 1e-12)
        assert partition.partition_error() < 1e-12


class TestTransport:
    def test_zero_data_gives_zero_controls(self, flow, partition):
        grid = flow.grid
        zero_u = Field.vector(grid, np.zeros(grid.shape("u")), np.zeros(grid.shape("v")))
        zero_theta = Field.scalar(grid, np.zeros(grid.shape("cell")))
        controls = transport_control(flow, partition, zero_u, zero_theta, config=FAST, n_steps=20)
        assert np.all(controls.theta == 0.0)
        assert np.all(controls.w == 0.0)
        assert np.max(np.abs(controls.u)) == 0.0

    def test_temperature_is_flushed(self, flow, partition, rng):
        grid = flow.grid
        zero_u = Field.vector(grid, np.zeros(grid.shape("u")), np.zeros(grid.shape("v")))
        theta_star = rng.standard_normal(grid.shape("cell"))
        controls = transport_control(flow, partition, zero_u, Field.scalar(grid, theta_star), config=FAST, n_steps=40)

        assert np.allclose(controls.theta[0], theta_star, atol=1e-12)
        assert np.all(controls.theta[-1] == 0.0)
        # convex weights and bilinear sampling never amplify
        assert np.max(np.abs(controls.theta)) <= np.max(np.abs(theta_star)) * (1 + 1e-12)
        assert np.all(controls.w[0] == 0.0) and np.all(controls.w[-1] == 0.0)
        assert np.all(controls.w[:, grid.physical_closure["cell"]] == 0.0)
        assert controls.diagnostics.values["w_support_leak"] <= 1e-8
        assert np.isfinite(controls.diagnostics.values["theta_residual"])

    def test_norm_profile_ends_at_zero(self, flow, partition, rng):
        grid = flow.grid
        zero_u = Field.vector(grid, np.zeros(grid.shape("u")), np.zeros(grid.shape("v")))
        theta_star = Field.scalar(grid, rng.standard_normal(grid.shape("cell")))
        profile = transport_control(flow, partition, zero_u, theta_star, config=FAST, n_steps=20).norm_profile()
        assert profile[0] > 0.0
        assert profile[-1] == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.slow
    def test_exact_variant_hits_both_ends(self, flow, partition, rng):
        grid = flow.grid
        zero_u = Field.vector(grid, np.zeros(grid.shape("u")), np.zeros(grid.shape("v")))
        start = rng.standard_normal(grid.shape("cell"))
        end = rng.standard_normal(grid.shape("cell"))
        reverse = build_partition(flow.reversed(), squares=whole_strip(grid), config=FAST)
        controls = exact_transport_control(
            flow, partition, reverse,
            (zero_u, Field.scalar(grid, start)),
            (zero_u, Field.scalar(grid, end)),
            config=FAST, n_steps=40,
        )
        assert np.allclose(controls.theta[0], start, atol=1e-12)
        assert np.allclose(controls.theta[-1], end, atol=1e-12)
