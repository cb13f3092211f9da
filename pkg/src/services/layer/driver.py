"""
Boundary-layer runs on every side of the box, one worker per side
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np

from ..base import Diagnostics, Side
from ..config import LayerConfig
from ..exceptions import ValidationError
from ..geometry.boundary import BoundaryCoefficients
from ..geometry.fields import Field
from ..geometry.grid import Grid2D
from ..geometry.norms import half_line_grid, weighted_z_norm
from .dissipation import DissipationControl, design_dissipation_control
from .heat import HalfLineStepper, step_layer
from .profile import LayerCoefficients, LayerProfile, layer_coefficients, layer_norm


logger = logging.getLogger(__name__)

CoefficientSchedule = Callable[[float], LayerCoefficients]


@dataclass
class LayerHistory:
    """rho on one side at every step of [0, T]"""
    side: Side
    s: np.ndarray
    z: np.ndarray
    times: np.ndarray
    values: np.ndarray
    control: Optional[DissipationControl] = None
    controlled: Optional[np.ndarray] = None
    diagnostics: Diagnostics = field(default_factory=Diagnostics)

    def profile(self, k: int) -> LayerProfile:
        return LayerProfile(self.side, self.s, self.z, self.values[k], float(self.times[k]))

    def at(self, t: float) -> LayerProfile:
        k = int(np.clip(np.searchsorted(self.times, t), 0, len(self.times) - 1))
        if k > 0 and abs(self.times[k - 1] - t) < abs(self.times[k] - t):
            k -= 1
        return self.profile(k)

    @property
    def final(self) -> LayerProfile:
        return self.profile(len(self.times) - 1)

    def norms(self, x_derivatives: int = 0, z_weight: float = 0.0) -> np.ndarray:
        return np.array([layer_norm(v, self.s, self.z, x_derivatives, z_weight) for v in self.values])


def steady_schedules(velocity: Field, coeffs: BoundaryCoefficients,
                     amplitude: Callable[[float], float]) -> Dict[Side, CoefficientSchedule]:
    """Coefficients of u0(t) = amplitude(t) * velocity; they scale linearly with u0"""
    steady = {side: layer_coefficients(velocity, coeffs, side) for side in Side}
    return {side: (lambda t, c=c: c.scaled(amplitude(t))) for side, c in steady.items()}


def reference_schedules(flow, coeffs: BoundaryCoefficients) -> Dict[Side, CoefficientSchedule]:
    """Layer coefficients driven by the reference flow a(t) * strength * grad Theta"""
    gu, gv = flow.gradient
    velocity = Field.vector(flow.grid, gu, gv)
    return steady_schedules(velocity, coeffs, lambda t: flow.amplitude(t) * flow.strength)


def controlled_samples(grid: Grid2D, side: Side, config: LayerConfig) -> np.ndarray:
    """Wall samples where v_rho may act: next to the strip, or the whole side when allowed"""
    if config.control_all_collar:
        return np.ones(grid.side_length(side), dtype=bool)
    return grid.strip_adjacent(side)


def solve_layer(
    side: Side,
    schedule: CoefficientSchedule,
    horizon: float,
    dt: float,
    config: Optional[LayerConfig] = None,
    controlled: Optional[np.ndarray] = None,
    initial: Optional[LayerProfile] = None,
    z: Optional[np.ndarray] = None,
) -> LayerHistory:
    """March rho over [0, T] from rest and prepare its dissipation at the handoff

    The control is designed at the last step before the dissipation window
    opens; u0 must have switched off by then.
    """
    config = config or LayerConfig()
    z = half_line_grid(config.z_max, config.nz, config.first_step) if z is None else z
    stepper = HalfLineStepper(z)
    n_steps = max(int(np.ceil(horizon / dt - 1e-9)), 1)
    times = np.linspace(0.0, horizon, n_steps + 1)
    first = schedule(0.0)
    s = first.s
    profile = initial if initial is not None else LayerProfile.zeros(side, s, z)
    values = np.empty((len(times), len(s), len(z)))
    values[0] = profile.values

    window = (config.dissipation_window[0] * horizon, config.dissipation_window[1] * horizon)
    handoff = int(np.searchsorted(times, window[0], side="right")) - 1
    control = None
    diagnostics = Diagnostics()
    for k in range(1, len(times)):
        if k - 1 == handoff and config.moments > 0:
            control = design_dissipation_control(
                profile, times[handoff:], window, config.moments, controlled, config.mode_support, stepper,
            )
            for name, value in control.diagnostics.values.items():
                diagnostics.record(name, value)
        coefficients = schedule(times[k])
        if k - 1 >= handoff and coefficients.max_abs() > 0.0:
            raise ValidationError(
                f"Reference flow is still active at t={times[k]:.3f} inside the dissipation window of {side.value}"
            )
        forcing = control.at(times[k]) if control is not None else None
        profile = step_layer(profile, coefficients, times[k] - times[k - 1], forcing, stepper, config.cfl)
        values[k] = profile.values

    history = LayerHistory(
        side=side, s=s, z=z, times=times, values=values, control=control,
        controlled=controlled, diagnostics=diagnostics,
    )
    if config.moments > 0 and controlled is not None and np.any(controlled):
        moments = history.final.moments(config.moments)[controlled]
        scale = max(float(np.max(np.abs(history.final.values))), 1e-300)
        diagnostics.record("final_moments", float(np.max(np.abs(moments))) / scale)
    return history


def solve_boundary_layers(
    schedules: Dict[Side, CoefficientSchedule],
    grid: Grid2D,
    horizon: float,
    dt: float,
    config: Optional[LayerConfig] = None,
    workers: int = 4,
) -> Dict[Side, LayerHistory]:
    """Independent layer runs per side, run concurrently"""
    config = config or LayerConfig()
    z = half_line_grid(config.z_max, config.nz, config.first_step)

    def run(side: Side) -> LayerHistory:
        return solve_layer(side, schedules[side], horizon, dt, config, controlled_samples(grid, side, config), z=z)

    with ThreadPoolExecutor(max_workers=max(workers, 1)) as pool:
        histories = dict(zip(schedules, pool.map(run, schedules)))

    report_collar(histories)
    return histories


def report_collar(histories: Dict[Side, LayerHistory]) -> None:
    """Compare the final layer on controlled and uncontrolled wall samples"""
    controlled, free = [], []
    for history in histories.values():
        mask = history.controlled if history.controlled is not None else np.zeros(len(history.s), dtype=bool)
        final = history.final.values
        rows = np.sqrt(np.atleast_1d(weighted_z_norm(final, history.z)))
        controlled.extend(rows[mask])
        free.extend(rows[~mask])
    if not controlled or not free:
        return
    worst_free, worst_controlled = max(free), max(controlled)
    for history in histories.values():
        history.diagnostics.record("uncontrolled_final", worst_free)
        history.diagnostics.record("controlled_final", worst_controlled)
    if worst_free > worst_controlled:
        logger.warning(
            f"⚠️ Layer on the physical collar is larger than on the controlled faces | "
            f"free={worst_free:.3e} | controlled={worst_controlled:.3e}"
        )
