"""
Half-line layer equation: implicit z-diffusion, explicit transport and stretching
"""
import logging
from typing import Dict, Optional

import numpy as np
from scipy.linalg import solve_banded

from ..exceptions import CFLViolationError, ValidationError
from .profile import LayerCoefficients, LayerProfile, z_volumes


logger = logging.getLogger(__name__)


class HalfLineStepper:
    """Backward-Euler finite-volume heat step on a stretched z grid

    dz r(0) = g at the wall node and r = 0 at z_max. Rows of the state are
    independent wall samples and are solved together.
    """

    def __init__(self, z: np.ndarray):
        z = np.asarray(z, dtype=float)
        if len(z) < 3 or np.any(np.diff(z) <= 0) or z[0] != 0.0:
            raise ValidationError("Half-line grid must start at 0 and increase strictly")
        self.z = z
        self.volumes = z_volumes(z)
        self.spacing = np.diff(z)
        self._banded: Dict[float, np.ndarray] = {}

    def banded(self, dt: float) -> np.ndarray:
        key = float(dt)
        if key not in self._banded:
            n = len(self.z)
            inv = 1.0 / self.spacing
            ab = np.zeros((3, n))
            diag = self.volumes / dt
            diag[:-1] += inv
            diag[1:] += inv
            diag[-1] = 1.0
            ab[1] = diag
            ab[0, 1:] = -inv
            ab[2, :-1] = -inv
            ab[2, -2] = 0.0
            if len(self._banded) > 64:
                self._banded.clear()
            self._banded[key] = ab
        return self._banded[key]

    def advance(self, values: np.ndarray, dt: float, neumann=0.0, source: Optional[np.ndarray] = None) -> np.ndarray:
        """One implicit step of r_t = r_zz + source for values shaped (n_samples, nz)"""
        values = np.atleast_2d(values)
        rhs = values * (self.volumes / dt)
        if source is not None:
            rhs = rhs + source * self.volumes
        rhs[:, 0] -= neumann
        rhs[:, -1] = 0.0
        return solve_banded((1, 1), self.banded(dt), rhs.T, check_finite=False).T

    def stretch_factor(self) -> float:
        """max z / dz, the cell count crossed per unit of u0_flat * dt"""
        dz = np.gradient(self.z)
        return float(np.max(self.z / dz))


def stable_layer_dt(coefficients: LayerCoefficients, stepper: HalfLineStepper, cfl: float = 0.5) -> float:
    """Largest explicit step for x-transport and z-stretching"""
    ds = float(coefficients.s[1] - coefficients.s[0]) if len(coefficients.s) > 1 else np.inf
    transport = np.max(np.abs(coefficients.tangential)) / ds + np.max(np.abs(coefficients.slope))
    stretch = np.max(np.abs(coefficients.flat)) * stepper.stretch_factor()
    rate = transport + stretch
    return np.inf if rate == 0.0 else cfl / rate


def _upwind(values: np.ndarray, coordinate: np.ndarray, speed: np.ndarray, axis: int) -> np.ndarray:
    """One-sided differences taken against the sign of speed (broadcast along axis)"""
    values = np.moveaxis(values, axis, -1)
    slopes = np.diff(values, axis=-1) / np.diff(coordinate)
    backward = np.concatenate([slopes[..., :1], slopes], axis=-1)
    forward = np.concatenate([slopes, slopes[..., -1:]], axis=-1)
    out = np.where(np.moveaxis(speed, axis, -1) > 0.0, backward, forward)
    return np.moveaxis(out, -1, axis)


def layer_convection(profile: LayerProfile, coefficients: LayerCoefficients) -> np.ndarray:
    """[(u0.grad) rho + (rho.grad) u0]_tan + u0_flat z dz rho, tangential component"""
    r = profile.values
    tangential = np.broadcast_to(coefficients.tangential[:, None], r.shape)
    stretch = coefficients.flat[:, None] * profile.z[None, :]
    dr_ds = _upwind(r, profile.s, tangential, axis=0) if len(profile.s) > 1 else np.zeros_like(r)
    dr_dz = _upwind(r, profile.z, np.broadcast_to(stretch, r.shape), axis=1)
    return tangential * dr_ds + coefficients.slope[:, None] * r + stretch * dr_dz


def step_layer(
    profile: LayerProfile,
    coefficients: LayerCoefficients,
    dt: float,
    control: Optional[np.ndarray] = None,
    stepper: Optional[HalfLineStepper] = None,
    cfl: float = 0.5,
    max_halvings: int = 12,
) -> LayerProfile:
    """Advance rho_t + [(u0.grad)rho + (rho.grad)u0]_tan + u0_flat z rho_z - rho_zz = v by dt

    The step is halved until the explicit terms satisfy the CFL bound;
    CFLViolationError once max_halvings is exhausted.
    """
    stepper = stepper or HalfLineStepper(profile.z)
    limit = stable_layer_dt(coefficients, stepper, cfl)
    substeps = 1
    while dt / substeps > limit:
        substeps *= 2
        if substeps > 2 ** max_halvings:
            raise CFLViolationError(
                f"Layer step on {profile.side.value} needs dt <= {limit:.3e}, got {dt:.3e}",
                dt_limit=limit,
            )
    if substeps > 1:
        logger.debug(f"Layer step halved | side={profile.side.value} | substeps={substeps}")

    h = dt / substeps
    values = profile.values
    current = profile
    for _ in range(substeps):
        explicit = layer_convection(current, coefficients) if coefficients.max_abs() > 0.0 else 0.0
        source = -explicit if control is None else control - explicit
        values = stepper.advance(values, h, coefficients.neumann, source if np.ndim(source) else None)
        current = current.with_values(values)
    return current.with_values(values, profile.time + dt)
