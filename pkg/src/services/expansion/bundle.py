"""
Profiles of one asymptotic expansion and their time-dependent access
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Tuple

import numpy as np

from ..base import ExpansionMode, Side, check_positive
from ..exceptions import MissingProfileError, ValidationError
from ..flushing.reference import ReferenceFlow
from ..flushing.transport import TransportControls
from ..geometry.boundary import BoundaryCoefficients
from ..geometry.grid import Grid2D
from ..layer.driver import CoefficientSchedule, LayerHistory
from ..layer.profile import LayerCoefficients, LayerProfile
from ..layer.technical import TechnicalProfiles, technical_profiles
from ..solver.state import Trajectory
from .trace import LayerSampler, MacPair


logger = logging.getLogger(__name__)

REQUIRED_PROFILES: Dict[ExpansionMode, Tuple[str, ...]] = {
    ExpansionMode.SLIP: ("flow", "transport"),
    ExpansionMode.FRICTION: ("flow", "transport", "layers", "schedules"),
    ExpansionMode.TRACKING_1: ("flow", "transport", "layers", "schedules"),
    ExpansionMode.TRACKING_2: ("layers", "schedules", "target"),
}

_TECHNICAL_CACHE_SIZE = 16


@dataclass
class ExpansionBundle:
    """u0 (flow), (u1, theta1) (transport), rho (layers), the target (u_bar, theta_bar) and eps

    ``schedules`` gives the layer coefficients of u0 per side; the technical
    profiles beta, zeta and psi are rebuilt from rho on demand. ``target`` is
    stored in original time and read at eps t.
    """
    mode: ExpansionMode
    epsilon: float
    coeffs: BoundaryCoefficients
    flow: Optional[ReferenceFlow] = None
    transport: Optional[TransportControls] = None
    layers: Optional[Dict[Side, LayerHistory]] = None
    schedules: Optional[Dict[Side, CoefficientSchedule]] = None
    target: Optional[Trajectory] = None
    theta0: Optional[np.ndarray] = None
    poisson_tol: float = 1e-10
    _technical: Dict[float, TechnicalProfiles] = field(default_factory=dict, repr=False, compare=False)
    _sampler: Optional[LayerSampler] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if isinstance(self.mode, str):
            self.mode = ExpansionMode(self.mode)
        self.epsilon = check_positive("epsilon", self.epsilon)
        missing = [name for name in REQUIRED_PROFILES[self.mode] if getattr(self, name) is None]
        if missing:
            raise MissingProfileError(
                f"Expansion mode {self.mode.value} needs profiles {missing}",
                details={"mode": self.mode.value, "missing": missing},
            )
        if self.layers is not None and set(self.layers) != set(Side):
            raise MissingProfileError("Layer histories must cover every side", details={"sides": [s.value for s in self.layers]})

    @property
    def grid(self) -> Grid2D:
        return self.coeffs.grid

    @property
    def has_layers(self) -> bool:
        return self.mode != ExpansionMode.SLIP

    @property
    def root(self) -> float:
        return float(np.sqrt(self.epsilon))

    def with_mode(self, mode: ExpansionMode) -> "ExpansionBundle":
        return replace(self, mode=mode, _technical={}, _sampler=self._sampler)

    # reference flow and first-order profiles

    def base_velocity(self, t: float) -> MacPair:
        """u0(t), zero once the reference flow is not part of the expansion"""
        if self.flow is None or self.mode == ExpansionMode.TRACKING_2:
            return np.zeros(self.grid.shape("u")), np.zeros(self.grid.shape("v"))
        return self.flow.velocity(t)

    def first_order(self, t: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(u, v, theta) of the order-eps velocity profile: u1 or u_bar(eps t)"""
        if self.mode == ExpansionMode.TRACKING_2:
            state = self.target.at(self.epsilon * t)
            return state.u.u, state.u.v, state.theta.values
        state = self.transport.at(t)
        return state.u.u, state.u.v, state.theta.values

    # boundary layer

    def _history(self, side: Side) -> LayerHistory:
        return self.layers[side]

    def layer_values(self, side: Side, t: float) -> np.ndarray:
        """rho on one side at time t, linear in time between stored levels"""
        history = self._history(side)
        times = history.times
        if t <= times[0]:
            return history.values[0]
        if t >= times[-1]:
            return history.values[-1]
        k = int(np.searchsorted(times, t, side="right")) - 1
        w = (t - times[k]) / (times[k + 1] - times[k])
        return (1.0 - w) * history.values[k] + w * history.values[k + 1]

    def rho(self, t: float) -> Dict[Side, np.ndarray]:
        return {side: self.layer_values(side, t) for side in Side}

    def layer_control(self, t: float) -> Dict[Side, np.ndarray]:
        """v_rho(t) per side (zero where no dissipation control was designed)"""
        out = {}
        for side in Side:
            history = self._history(side)
            if history.control is None:
                out[side] = np.zeros((len(history.s), len(history.z)))
            else:
                out[side] = history.control.at(t)
        return out

    def layer_coefficients(self, t: float) -> Dict[Side, LayerCoefficients]:
        return {side: self.schedules[side](t) for side in Side}

    def layer_step(self) -> float:
        """Smallest stored time step of the layer histories"""
        steps = [np.min(np.diff(h.times)) for h in self.layers.values() if len(h.times) > 1]
        if not steps:
            raise MissingProfileError("Layer histories need two time levels for d beta/dt")
        return float(min(steps))

    @property
    def z(self) -> np.ndarray:
        return next(iter(self.layers.values())).z

    def s(self, side: Side) -> np.ndarray:
        return self._history(side).s

    def sampler(self) -> LayerSampler:
        if self._sampler is None:
            self._sampler = LayerSampler(self.grid, self.epsilon, self.z, {side: self.s(side) for side in Side})
        return self._sampler

    def technical(self, t: float) -> TechnicalProfiles:
        """beta, zeta and psi built from rho(t)"""
        if not self.has_layers:
            raise ValidationError("Technical profiles only exist for expansions with a boundary layer")
        key = round(float(t), 12)
        if key not in self._technical:
            if len(self._technical) >= _TECHNICAL_CACHE_SIZE:
                self._technical.pop(next(iter(self._technical)))
            profiles = {
                side: LayerProfile(side, self.s(side), self.z, values, t) for side, values in self.rho(t).items()
            }
            self._technical[key] = technical_profiles(
                profiles, self.layer_coefficients(t), self.coeffs, self.epsilon, self.grid, self.poisson_tol,
            )
        return self._technical[key]

    def beta_rate(self, t: float) -> Tuple[Dict[Side, np.ndarray], Dict[Side, np.ndarray]]:
        """d beta/dt per side from two stored time levels (tangential, normal parts)"""
        dt = self.layer_step()
        horizon = float(next(iter(self.layers.values())).times[-1])
        t0, t1 = (t - dt, t) if t - dt >= 0.0 else (t, t + dt)
        t1 = min(t1, horizon)
        if t1 <= t0:
            raise MissingProfileError(f"No second time level around t={t:.4f} for d beta/dt")
        a, b = self.technical(t0), self.technical(t1)
        tangential = {side: (b.beta_tangential[side] - a.beta_tangential[side]) / (t1 - t0) for side in Side}
        normal = {side: (b.beta_normal[side] - a.beta_normal[side]) / (t1 - t0) for side in Side}
        return tangential, normal
