"""
Well-prepared dissipation: a layer control cancelling the first z-moments
"""
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from ..base import Diagnostics, Side
from ..exceptions import ValidationError
from ..flushing.reference import Amplitude
from .heat import HalfLineStepper
from .profile import LayerProfile, z_moments


logger = logging.getLogger(__name__)

MOMENT_TOLERANCE = 1e-8


def z_modes(z: np.ndarray, count: int, support: float) -> np.ndarray:
    """z^i (1 - z/L)^4 on [0, L], normalized to unit maximum; shape (count, nz)"""
    if support <= 0:
        raise ValidationError(f"Mode support must be positive, got {support}")
    envelope = np.where(z < support, (1.0 - z / support) ** 4, 0.0)
    modes = np.stack([z ** i * envelope for i in range(count)])
    return modes / np.max(np.abs(modes), axis=1, keepdims=True)


@dataclass
class DissipationControl:
    """v_rho(t, s, z) = a(t) sum_i c_i(s) m_i(z) with a a unit-mass bump on the window"""
    side: Side
    s: np.ndarray
    z: np.ndarray
    window: Tuple[float, float]
    amplitudes: np.ndarray
    modes: np.ndarray
    moments: int
    diagnostics: Diagnostics = field(default_factory=Diagnostics)

    @property
    def profile(self) -> Amplitude:
        return Amplitude(self.window[0], self.window[1], 1.0)

    @property
    def is_zero(self) -> bool:
        return not np.any(self.amplitudes)

    def at(self, t: float) -> np.ndarray:
        """Control values (n_side, nz); tangential, so v_rho . nu = 0"""
        a = self.profile(t)
        if a == 0.0:
            return np.zeros((len(self.s), len(self.z)))
        return a * (self.amplitudes @ self.modes)

    def support_columns(self) -> np.ndarray:
        return np.any(self.amplitudes != 0.0, axis=1)


def _march(stepper: HalfLineStepper, values: np.ndarray, times: Sequence[float],
           source=None) -> np.ndarray:
    for k in range(1, len(times)):
        dt = times[k] - times[k - 1]
        values = stepper.advance(values, dt, 0.0, None if source is None else source(times[k]))
    return values


def design_dissipation_control(
    profile: LayerProfile,
    times: np.ndarray,
    window: Tuple[float, float],
    moments: int,
    mask: Optional[np.ndarray] = None,
    mode_support: float = 8.0,
    stepper: Optional[HalfLineStepper] = None,
) -> DissipationControl:
    """Amplitudes that zero int z^j rho(T) dz, j < moments, on the controlled samples

    times runs from the handoff (profile.time) to T and must be the step
    grid the layer is advanced on afterwards; u0 is assumed to vanish
    there, so the final moments are affine in the amplitudes. The response
    of every mode is marched once and a small least-squares problem is
    solved per wall sample.
    """
    times = np.asarray(times, dtype=float)
    if not (times[0] <= window[0] < window[1] <= times[-1]):
        raise ValidationError(f"Dissipation window {window} is not inside [{times[0]:.3f}, {times[-1]:.3f}]")
    stepper = stepper or HalfLineStepper(profile.z)
    mask = np.ones(len(profile.s), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    n_modes = moments + 2
    modes = z_modes(profile.z, n_modes, mode_support)
    control = DissipationControl(
        side=profile.side, s=profile.s, z=profile.z, window=tuple(window),
        amplitudes=np.zeros((len(profile.s), n_modes)), modes=modes, moments=moments,
    )
    if moments == 0 or not np.any(mask):
        return control

    bump = control.profile
    free = _march(stepper, profile.values, times)
    response = _march(stepper, np.zeros_like(modes), times, lambda t: bump(t) * modes)
    free_moments = z_moments(free, profile.z, moments)[mask]
    gain = z_moments(response, profile.z, moments).T

    coefficients, _, rank, _ = np.linalg.lstsq(gain, -free_moments.T, rcond=None)
    control.amplitudes[mask] = coefficients.T

    residual = gain @ coefficients + free_moments.T
    scale = max(float(np.max(np.abs(free))), 1e-300)
    worst = float(np.max(np.abs(residual))) / scale if residual.size else 0.0
    control.diagnostics.record("moment_residual", worst)
    control.diagnostics.record("achievable_moments", float(rank))
    if worst > MOMENT_TOLERANCE:
        message = f"Only {rank} of {moments} moments can be cancelled on {profile.side.value} | residual={worst:.2e}"
        control.diagnostics.warn(message)
        logger.warning(f"⚠️ {message}")
    else:
        logger.debug(f"Dissipation control on {profile.side.value} | moments={moments} | residual={worst:.2e}")
    return control
