import numpy as np
import pytest
from scipy.special import erfc

from conftest import divergence_free
from services.base import Side
from services.config import LayerConfig
from services.exceptions import ValidationError
from services.flushing import Amplitude
from services.geometry import BoundaryCoefficients, Field
from services.geometry.boundary import navier_traces
from services.geometry.calculus import face_gradient
from services.geometry.norms import half_line_grid
from services.layer import (
    HalfLineStepper,
    LayerCoefficients,
    LayerProfile,
    decay_timeline,
    design_dissipation_control,
    layer_coefficients,
    measure_decay,
    solve_boundary_layers,
    solve_layer,
    step_layer,
    steady_schedules,
    target_exponent,
    technical_profiles,
)
from services.layer.decay import DecayTimeline
from services.layer.profile import z_volumes


def quiet(side, s):
    zero = np.zeros(len(s))
    return LayerCoefficients(side, s, zero, zero, zero, zero, zero)


def gaussian(z, n=1):
    return np.tile(np.exp(-z ** 2), (n, 1))


def prepared_profile(z, moments, times=None, window=(0.1, 0.9)):
    """Gaussian layer marched to t = 1 under a control cancelling its first moments"""
    s = np.array([0.0])
    profile = LayerProfile(Side.RIGHT, s, z, gaussian(z))
    stepper = HalfLineStepper(z)
    times = np.linspace(0.0, 1.0, 101) if times is None else times
    control = design_dissipation_control(profile, times, window, moments, mode_support=4.0, stepper=stepper)
    coefficients = quiet(Side.RIGHT, s)
    for k in range(1, len(times)):
        profile = step_layer(profile, coefficients, times[k] - times[k - 1], control.at(times[k]), stepper)
    return profile, control


@pytest.fixture(scope="module")
def long_z():
    return half_line_grid(400.0, 300, 0.02)


class TestLayerCoefficients:
    def test_zero_flow_gives_zero_coefficients(self, grid, coeffs):
        u0 = Field.vector(grid, np.zeros(grid.shape("u")), np.zeros(grid.shape("v")))
        for side in Side:
            c = layer_coefficients(u0, coeffs, side)
            assert c.max_abs() == 0.0

    def test_flat_coefficient_recovers_linear_normal_velocity(self, grid, coeffs):
        x, y = grid.coordinates("u")
        u0 = Field.vector(grid, x * (1.0 + y), np.zeros(grid.shape("v")))
        c = layer_coefficients(u0, coeffs, Side.LEFT)
        assert np.allclose(c.flat, 1.0 + grid.y_centers, atol=1e-12)

    def test_neumann_data_of_shear_free_gradient(self, grid):
        no_friction = BoundaryCoefficients.uniform(grid, friction=0.0, heat=0.0)
        x, y = grid.coordinates("cell")
        p = np.cos(np.pi * x / grid.lx) * np.cos(np.pi * y / grid.ly)
        u0 = Field.vector(grid, *face_gradient(p, grid))
        traces = navier_traces(u0, no_friction)
        for side in Side:
            c = layer_coefficients(u0, no_friction, side)
            expected = 2.0 * c.taper * (traces[side].deformation_normal @ side.tangent)
            assert np.allclose(c.neumann, expected, atol=1e-12)

    def test_taper_vanishes_at_corners(self, grid, coeffs):
        c = layer_coefficients(divergence_free(grid), coeffs, Side.BOTTOM)
        assert c.taper[0] < 0.5 and c.taper[-1] < 0.5
        assert np.all(c.taper[4:-4] == 1.0)


class TestStepLayer:
    def test_rest_stays_at_rest(self):
        z = half_line_grid(40.0, 128, 0.01)
        s = np.linspace(0.05, 0.95, 10)
        profile = LayerProfile.zeros(Side.BOTTOM, s, z)
        for _ in range(5):
            profile = step_layer(profile, quiet(Side.BOTTOM, s), 0.01)
        assert np.all(profile.values == 0.0)

    def test_profile_stays_tangential(self, rng):
        z = half_line_grid(40.0, 64, 0.02)
        s = np.linspace(0.05, 0.95, 10)
        profile = LayerProfile(Side.TOP, s, z, rng.standard_normal((10, 64)) * np.exp(-z))
        assert np.all(profile.normal_component() == 0.0)

    def test_heat_step_conserves_mass(self):
        z = half_line_grid(40.0, 128, 0.01)
        s = np.array([0.5])
        profile = LayerProfile(Side.LEFT, s, z, gaussian(z))
        mass = float(np.sum(z_volumes(z) * profile.values[0]))
        for _ in range(10):
            profile = step_layer(profile, quiet(Side.LEFT, s), 0.01)
        assert np.sum(z_volumes(z) * profile.values[0]) == pytest.approx(mass, rel=1e-10)

    def test_step_neumann_data_matches_similarity_solution(self):
        z = half_line_grid(20.0, 400, 0.005)
        s = np.array([0.0])
        g = 1.0
        coefficients = LayerCoefficients(Side.LEFT, s, *(np.zeros(1),) * 3, np.full(1, g), np.zeros(1))
        profile = LayerProfile.zeros(Side.LEFT, s, z)
        stepper = HalfLineStepper(z)
        for _ in range(1000):
            profile = step_layer(profile, coefficients, 1e-3, stepper=stepper)
        t = profile.time
        x = z / (2.0 * np.sqrt(t))
        ierfc = np.exp(-x ** 2) / np.sqrt(np.pi) - x * erfc(x)
        exact = -2.0 * g * np.sqrt(t) * ierfc
        assert np.max(np.abs(profile.values[0] - exact)) <= 0.01 * np.max(np.abs(exact))

    def test_large_transport_halves_the_step(self):
        z = half_line_grid(40.0, 64, 0.02)
        s = np.linspace(0.05, 0.95, 10)
        ones = np.ones(10)
        fast = LayerCoefficients(Side.BOTTOM, s, 50.0 * ones, 0.0 * ones, 0.0 * ones, 0.0 * ones, 0.0 * ones)
        profile = LayerProfile(Side.BOTTOM, s, z, gaussian(z, 10))
        out = step_layer(profile, fast, 0.1)
        assert np.all(np.isfinite(out.values))
        assert out.time == pytest.approx(0.1)


class TestDissipation:
    def test_moments_vanish_after_control(self):
        z = half_line_grid(40.0, 128, 0.01)
        for k in (1, 2):
            final, control = prepared_profile(z, k)
            moments = final.moments(k)
            assert np.max(np.abs(moments)) <= 1e-8 * np.max(np.abs(final.values))
            assert not control.is_zero
            assert control.diagnostics.values["moment_residual"] <= 1e-8

    def test_zero_profile_needs_no_control(self):
        z = half_line_grid(40.0, 64, 0.02)
        profile = LayerProfile.zeros(Side.RIGHT, np.array([0.0, 0.5]), z)
        control = design_dissipation_control(profile, np.linspace(0.0, 1.0, 51), (0.1, 0.9), 2)
        assert control.is_zero
        assert np.all(control.at(0.5) == 0.0)

    def test_control_is_supported_in_its_window(self):
        z = half_line_grid(40.0, 64, 0.02)
        _, control = prepared_profile(z, 1)
        assert np.all(control.at(0.05) == 0.0)
        assert np.all(control.at(0.95) == 0.0)
        assert np.any(control.at(0.5) != 0.0)

    def test_window_outside_the_step_grid_is_rejected(self):
        z = half_line_grid(40.0, 64, 0.02)
        profile = LayerProfile(Side.RIGHT, np.array([0.0]), z, gaussian(z))
        with pytest.raises(ValidationError):
            design_dissipation_control(profile, np.linspace(0.5, 1.0, 11), (0.1, 0.9), 1)


class TestDecay:
    def test_pure_heat_decays_with_quarter_exponent(self, long_z):
        profile = LayerProfile(Side.LEFT, np.array([0.0]), long_z, gaussian(long_z))
        fit = measure_decay(decay_timeline(profile, 1000.0), k=0)
        assert fit.exponent == pytest.approx(0.25, abs=0.05)
        assert fit.target == 0.25
        assert not fit.diagnostics.warnings

    def test_cancelled_mass_speeds_up_decay(self, long_z):
        free = LayerProfile(Side.RIGHT, np.array([0.0]), long_z, gaussian(long_z))
        base = measure_decay(decay_timeline(free, 1000.0)).exponent
        prepared, _ = prepared_profile(long_z, 1)
        gained = measure_decay(decay_timeline(prepared, 1000.0), k=1).exponent
        assert gained >= 0.70
        assert gained - base >= 0.35

    def test_two_cancelled_moments(self, long_z):
        prepared, _ = prepared_profile(long_z, 2)
        assert measure_decay(decay_timeline(prepared, 1000.0), k=2).exponent >= 1.0

    def test_target_exponent(self):
        for k in range(4):
            assert target_exponent(k, k) == 0.25
        assert target_exponent(0, 1) == 0.75

    def test_short_timeline_warns(self):
        timeline = DecayTimeline(times=np.array([0.0, 1.0, 2.0, 5.0]), norms=np.array([1.0, 0.8, 0.7, 0.6]))
        fit = measure_decay(timeline, start=1.0)
        assert fit.diagnostics.warnings

    def test_log_power_abscissa(self):
        t = np.concatenate([[0.0], np.geomspace(1.0, 1000.0, 50)])
        norms = (np.log(2.0 + t) / (2.0 + t)) ** 0.5
        fit = measure_decay(DecayTimeline(times=t, norms=norms), abscissa="log-power")
        assert fit.exponent == pytest.approx(0.5, abs=1e-10)


def side_profiles(grid, z, builder):
    profiles = {}
    for side in Side:
        s = grid.side_coordinate(side)
        profiles[side] = LayerProfile(side, s, z, builder(side, s))
    return profiles


class TestTechnicalProfiles:
    def test_zero_layer_gives_zero_profiles(self, grid, coeffs):
        z = half_line_grid(40.0, 64, 0.05)
        profiles = side_profiles(grid, z, lambda side, s: np.zeros((len(s), len(z))))
        u0 = divergence_free(grid)
        coefficients = {side: layer_coefficients(u0, coeffs, side) for side in Side}
        result = technical_profiles(profiles, coefficients, coeffs, 0.01, grid)
        for side in Side:
            assert np.all(result.beta(side) == 0.0)
            assert np.all(result.psi[side] == 0.0)
        assert np.max(np.abs(result.zeta)) < 1e-12

    def test_friction_part_of_beta(self, grid, coeffs):
        z = half_line_grid(40.0, 64, 0.05)
        profiles = side_profiles(grid, z, lambda side, s: np.sin(np.pi * s)[:, None] * np.exp(-z)[None, :])
        u0 = divergence_free(grid)
        coefficients = {side: layer_coefficients(u0, coeffs, side) for side in Side}
        result = technical_profiles(profiles, coefficients, coeffs, 0.01, grid)
        for side, profile in profiles.items():
            # r(s, 0) = sin(pi s) and the friction is 0.5
            expected = -2.0 * np.exp(-z)[None, :] * 0.5 * np.sin(np.pi * profile.s)[:, None]
            assert np.allclose(result.beta_tangential[side], expected, atol=1e-6)

    def test_psi_integrates_the_normal_convection(self, grid, coeffs, rng):
        z = half_line_grid(40.0, 64, 0.05)
        profiles = side_profiles(grid, z, lambda side, s: rng.standard_normal((len(s), 1)) * np.exp(-z)[None, :])
        u0 = divergence_free(grid)
        coefficients = {side: layer_coefficients(u0, coeffs, side) for side in Side}
        result = technical_profiles(profiles, coefficients, coeffs, 0.01, grid)
        for side, profile in profiles.items():
            f = profile.values * coefficients[side].normal_slope[:, None]
            slope = np.diff(result.psi[side], axis=1) / np.diff(z)
            assert np.allclose(slope, 0.5 * (f[:, 1:] + f[:, :-1]), atol=1e-10)
            assert np.all(result.psi[side][:, -1] == 0.0)

    def test_zeta_problem_is_compatible(self, grid, coeffs, rng):
        z = half_line_grid(40.0, 64, 0.05)
        u0 = divergence_free(grid)
        coefficients = {side: layer_coefficients(u0, coeffs, side) for side in Side}
        constants = []
        for _ in range(20):
            profiles = side_profiles(
                grid, z, lambda side, s: rng.standard_normal((len(s), 1)) * np.exp(-0.5 * z)[None, :]
            )
            result = technical_profiles(profiles, coefficients, coeffs, 0.02, grid)
            assert result.compatibility <= 1e-10
            assert abs(np.mean(result.zeta)) < 1e-10
            constants.append(result.report["psi"])
        assert all(np.isfinite(constants))


class TestLayerRuns:
    def test_reference_driven_layers_are_prepared(self, grid, coeffs):
        config = LayerConfig(nz=64, z_max=20.0, first_step=0.02, moments=2)
        schedules = steady_schedules(divergence_free(grid), coeffs, Amplitude(0.05, 0.6, 1.0))
        histories = solve_boundary_layers(schedules, grid, 1.0, 0.01, config)
        assert set(histories) == set(Side)
        for side, history in histories.items():
            assert np.all(history.values[0] == 0.0)
            assert np.all(np.isfinite(history.values))
            if np.any(history.controlled):
                assert history.diagnostics.values["final_moments"] <= 1e-8
        assert not np.any(histories[Side.LEFT].controlled)
        assert np.all(histories[Side.RIGHT].controlled)

    def test_flow_inside_the_window_is_rejected(self, grid, coeffs):
        config = LayerConfig(nz=64, z_max=20.0, first_step=0.02, moments=1)
        schedules = steady_schedules(divergence_free(grid), coeffs, Amplitude(0.05, 0.9, 1.0))
        with pytest.raises(ValidationError):
            solve_layer(Side.RIGHT, schedules[Side.RIGHT], 1.0, 0.01, config, np.ones(grid.ny, dtype=bool))
