import numpy as np
import pytest

from conftest import divergence_free, random_divergence_free, smooth_stream
from services.base import FieldKind, Side
from services.config import GridConfig
from services.exceptions import GhostDataError, GridMismatchError, ValidationError
from services.geometry import (
    BoundaryCoefficients,
    Field,
    Grid2D,
    boundary_operators,
    discrete_calculus,
    half_line_grid,
    korn_audit,
    korn_constants,
    weighted_z_norm,
)
from services.geometry.boundary import BoundaryNonlinearity, wall_trace
from services.geometry.calculus import divergence, laplacian, node_curl, solve_stream, stream_velocity
from services.geometry.norms import boundary_weighted_temperature_norm, boundary_weighted_velocity_norm


def vector_from(grid, fu, fv):
    xu, yu = grid.coordinates("u")
    xv, yv = grid.coordinates("v")
    return Field.vector(grid, fu(xu, yu), fv(xv, yv))


class TestGrid:
    def test_regions_are_nested(self, grid):
        assert grid.omega_prime.inside(grid.omega_0, strict=True)
        assert grid.omega_0.inside(grid.omega_c, strict=True)
        assert grid.omega.inside(grid.strip)
        assert grid.omega.x0 > grid.x_gamma

    def test_normals_have_unit_length(self, grid):
        for face in grid.boundary_faces:
            assert np.hypot(*face.normal) == pytest.approx(1.0)
            assert np.dot(face.normal, face.tangent) == pytest.approx(0.0)

    def test_control_region_must_avoid_physical_domain(self):
        config = GridConfig(nx=24, ny=16, control_region=[0.5, 1.4, 0.2, 0.8])
        with pytest.raises(ValidationError):
            Grid2D.from_config(config)

    def test_too_small_grid_is_rejected(self):
        with pytest.raises(GhostDataError):
            Grid2D.from_config(GridConfig(nx=3, ny=3, control_region=[1.1, 1.4, 0.2, 0.8]))

    def test_collar_round_trip(self, grid, rng):
        values = rng.standard_normal(grid.shape("cell"))
        for side in Side:
            collar = grid.collar_view(values, side)
            back = grid.collar_scatter(collar, side)
            assert np.allclose(grid.collar_view(back, side), collar)


class TestBoundaryOperators:
    def test_rigid_rotation_has_zero_navier_operator_without_friction(self, grid):
        u = vector_from(grid, lambda x, y: -y, lambda x, y: x)
        coeffs = BoundaryCoefficients.uniform(grid)
        traces = boundary_operators(u, coeffs)
        assert traces.max_abs() < 1e-10

    def test_constant_temperature_robin_trace(self, grid):
        theta = Field.scalar(grid, np.full(grid.shape("cell"), 2.5))
        coeffs = BoundaryCoefficients.uniform(grid, heat=1.0)
        traces = boundary_operators(theta, coeffs)
        for side in Side:
            assert np.allclose(traces[side].operator, 2.5)
            assert np.allclose(traces[side].normal_derivative, 0.0, atol=1e-10)

    def test_shear_on_top_wall(self, grid):
        u = vector_from(grid, lambda x, y: y, lambda x, y: 0.0 * x)
        traces = boundary_operators(u, BoundaryCoefficients.uniform(grid))
        top = traces[Side.TOP].operator
        assert np.allclose(top[:, 0], 0.5)
        assert np.allclose(top[:, 1], 0.0)

    def test_navier_operator_is_tangential(self, grid, rng):
        u = random_divergence_free(grid, rng)
        friction = rng.standard_normal((2, 2))
        coeffs = BoundaryCoefficients.uniform(grid, friction=friction + friction.T, heat=0.3)
        traces = boundary_operators(u, coeffs)
        for side in Side:
            assert np.max(np.abs(traces[side].operator @ side.normal)) == 0.0

    def test_asymmetric_friction_is_rejected(self, grid):
        with pytest.raises(ValidationError):
            BoundaryCoefficients.uniform(grid, friction=np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_mismatched_grid_is_rejected(self, grid):
        other = Grid2D.from_config(GridConfig(nx=32, ny=16))
        u = Field.zeros(grid, FieldKind.VECTOR)
        with pytest.raises(GridMismatchError):
            boundary_operators(u, BoundaryCoefficients.uniform(other))

    def test_wall_trace_is_exact_for_quadratics(self, grid):
        x, y = grid.coordinates("cell")
        values = 1.0 + x ** 2
        assert np.allclose(wall_trace(values, Side.LEFT), 1.0)
        assert np.allclose(wall_trace(values, Side.RIGHT), 1.0 + grid.lx ** 2)

    def test_cubic_boundary_law_increments(self, grid):
        law = BoundaryNonlinearity.cubic(2.0)
        wall = {side: np.full((grid.side_length(side), 2), 0.5) for side in Side}
        temps = {side: np.full(grid.side_length(side), 1.0) for side in Side}
        friction, heat = law.linearized_increments(wall, temps)
        # int_0^1 g'(s theta) ds = g(theta) / theta
        assert np.allclose(heat[Side.LEFT], 2.0)
        # F u = f(u) for the secant matrix
        fu = np.einsum("nij,nj->ni", friction[Side.TOP], wall[Side.TOP])
        assert np.allclose(fu, law.f(wall[Side.TOP]))
        assert BoundaryNonlinearity.none().is_zero()


class TestCalculus:
    def test_laplacian_of_quadratic(self, grid):
        x, y = grid.coordinates("cell")
        lap = laplacian(x ** 2 + y ** 2, grid)
        assert np.allclose(lap[1:-1, 1:-1], 4.0)

    def test_stream_velocity_is_divergence_free(self, grid, rng):
        psi = rng.standard_normal(grid.shape("node"))
        u, v = stream_velocity(psi, grid)
        assert np.max(np.abs(divergence(u, v, grid))) < 1e-10 * np.max(np.abs(psi)) / min(grid.hx, grid.hy) ** 2

    def test_curl_of_rotation(self, grid):
        u = vector_from(grid, lambda x, y: -y, lambda x, y: x)
        curl = discrete_calculus(u)["curl"]
        assert np.allclose(curl[1:-1, 1:-1], 2.0)

    def test_stream_solve_inverts_curl(self, grid):
        psi = smooth_stream(grid)
        u, v = stream_velocity(psi, grid)
        recovered = solve_stream(node_curl(u, v, grid), grid)
        assert np.allclose(recovered, psi, atol=1e-10)


class TestNorms:
    def test_zero_field(self, grid):
        report = korn_audit(Field.zeros(grid, FieldKind.VECTOR))
        assert report.l2 == 0.0 and report.deformation == 0.0 and report.h1 == 0.0

    def test_rotation_has_no_deformation(self, grid):
        u = vector_from(grid, lambda x, y: -y, lambda x, y: x)
        report = korn_audit(u)
        assert report.deformation < 1e-10
        assert np.isfinite(report.ratio) and report.ratio > 1.0
        assert not report.admissible

    def test_korn_ratios_are_bounded(self, grid, rng):
        samples = [random_divergence_free(grid, rng) for _ in range(100)]
        c1, c2 = korn_constants(samples)
        assert 1.0 / np.sqrt(2.0) - 1e-12 <= c1 <= c2 < np.inf

    def test_boundary_weighted_norms(self, grid, coeffs):
        u = divergence_free(grid)
        theta = Field.scalar(grid, np.ones(grid.shape("cell")))
        plain = BoundaryCoefficients.uniform(grid)
        assert boundary_weighted_velocity_norm(u, coeffs) > boundary_weighted_velocity_norm(u, plain)
        perimeter = 2.0 * (grid.lx + grid.ly)
        expected = np.sqrt(grid.lx * grid.ly + 0.5 * perimeter)
        assert boundary_weighted_temperature_norm(theta, coeffs) == pytest.approx(expected, rel=1e-10)

    def test_weighted_z_norm_closed_forms(self):
        z = half_line_grid(40.0, 1000, 1e-3)
        g = np.exp(-z)
        assert weighted_z_norm(np.zeros_like(z), z) == 0.0
        assert weighted_z_norm(g, z, 0, 0) == pytest.approx(0.5, abs=1e-4)
        assert weighted_z_norm(g, z, 0, 1) == pytest.approx(0.75, abs=1e-4)

    def test_weighted_z_norm_is_monotone(self):
        z = half_line_grid()
        g = z * np.exp(-z)
        assert weighted_z_norm(g, z, 0, 1) >= weighted_z_norm(g, z, 0, 0)
        assert weighted_z_norm(g, z, 1, 0) >= weighted_z_norm(g, z, 0, 0)

    def test_weighted_z_norm_keeps_leading_axes(self):
        z = half_line_grid()
        g = np.stack([np.exp(-z), 2.0 * np.exp(-z)])
        values = weighted_z_norm(g, z)
        assert values.shape == (2,)
        assert values[1] == pytest.approx(4.0 * values[0])

    def test_weighted_z_norm_rejects_negative_orders(self):
        z = half_line_grid()
        with pytest.raises(ValidationError):
            weighted_z_norm(np.exp(-z), z, s=-1)
        with pytest.raises(ValidationError):
            weighted_z_norm(np.exp(-z), z, k=-0.5)
