"""
Solver state snapshots, forcing inputs and trajectories
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from ..base import Diagnostics, TimeSeries
from ..exceptions import SupportLeakError, ValidationError
from ..geometry.fields import Field, state_norm
from ..geometry.grid import Grid2D


logger = logging.getLogger(__name__)

VectorSource = Callable[[float], Tuple[np.ndarray, np.ndarray]]
ScalarSource = Callable[[float], np.ndarray]


@dataclass(frozen=True)
class FlowState:
    """Velocity, temperature and pressure at one time"""
    t: float
    u: Field
    theta: Field
    p: Optional[Field] = None

    @property
    def grid(self) -> Grid2D:
        return self.u.grid

    def norm(self) -> float:
        return state_norm(self.u, self.theta)

    def minus(self, other: "FlowState") -> "FlowState":
        return FlowState(self.t, self.u - other.u, self.theta - other.theta)

    def scaled(self, velocity_factor: float, theta_factor: float, t: Optional[float] = None) -> "FlowState":
        return FlowState(
            self.t if t is None else t,
            (velocity_factor * self.u).with_time(self.t if t is None else t),
            (theta_factor * self.theta).with_time(self.t if t is None else t),
            None if self.p is None else self.p,
        )

    def is_finite(self) -> bool:
        return self.u.is_finite() and self.theta.is_finite()


@dataclass
class ForcingInputs:
    """Controls v, w and divergence source sigma as functions of time"""
    v: Optional[VectorSource] = None
    w: Optional[ScalarSource] = None
    sigma: Optional[ScalarSource] = None
    check_support: bool = True

    @classmethod
    def zero(cls) -> "ForcingInputs":
        return cls()

    @classmethod
    def from_series(
        cls,
        v: Optional[TimeSeries] = None,
        w: Optional[TimeSeries] = None,
        sigma: Optional[TimeSeries] = None,
        check_support: bool = True,
    ) -> "ForcingInputs":
        """Forcing from sampled series; vector samples are stacked (2, ...) pairs or tuples"""
        vf = None
        if v is not None:
            def vf(t: float, _v=v):
                value = _v.at(t)
                return value[0], value[1]
        return cls(
            v=vf,
            w=(lambda t, _w=w: _w.at(t)) if w is not None else None,
            sigma=(lambda t, _s=sigma: _s.at(t)) if sigma is not None else None,
            check_support=check_support,
        )

    def is_zero(self) -> bool:
        return self.v is None and self.w is None and self.sigma is None

    def velocity(self, t: float, grid: Grid2D) -> Tuple[np.ndarray, np.ndarray]:
        if self.v is None:
            return np.zeros(grid.shape("u")), np.zeros(grid.shape("v"))
        return self.v(t)

    def temperature(self, t: float, grid: Grid2D) -> np.ndarray:
        if self.w is None:
            return np.zeros(grid.shape("cell"))
        return self.w(t)

    def divergence(self, t: float, grid: Grid2D) -> Optional[np.ndarray]:
        if self.sigma is None:
            return None
        return self.sigma(t)

    def verify_support(self, grid: Grid2D, times: np.ndarray, tol: float = 1e-12) -> None:
        """Every control must vanish on the closed physical domain"""
        if not self.check_support:
            return
        closure = grid.physical_closure
        for t in times:
            checks = []
            if self.v is not None:
                vu, vv = self.v(t)
                checks += [("v_x", vu, closure["u"]), ("v_y", vv, closure["v"])]
            if self.w is not None:
                checks.append(("w", self.w(t), closure["cell"]))
            if self.sigma is not None:
                checks.append(("sigma", self.sigma(t), closure["cell"]))
            for name, values, mask in checks:
                scale = max(float(np.max(np.abs(values))), 1.0)
                leak = float(np.max(np.abs(values[mask]))) if np.any(mask) else 0.0
                if leak > tol * scale:
                    raise SupportLeakError(
                        f"Control {name} is not supported outside the physical domain | t={t:.4f} | leak={leak:.3e}",
                        details={"control": name, "time": float(t), "leak": leak},
                    )


@dataclass
class EnergyRow:
    """Per-step energy bookkeeping"""
    t: float
    dt: float
    energy: float
    dissipation: float
    work: float


@dataclass
class Trajectory:
    """Output states of a run plus per-step ledger"""
    states: List[FlowState]
    epsilon: float = 1.0
    ledger: List[EnergyRow] = field(default_factory=list)
    diagnostics: Diagnostics = field(default_factory=Diagnostics)

    def __post_init__(self):
        if not self.states:
            raise ValidationError("Trajectory needs at least one state")

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    @property
    def initial(self) -> FlowState:
        return self.states[0]

    @property
    def final(self) -> FlowState:
        return self.states[-1]

    @property
    def grid(self) -> Grid2D:
        return self.states[0].grid

    def at(self, t: float) -> FlowState:
        """State at time t, linearly interpolated between outputs"""
        times = self.times
        if t <= times[0]:
            return self.states[0]
        if t >= times[-1]:
            return self.states[-1]
        k = int(np.searchsorted(times, t, side="right")) - 1
        a, b = self.states[k], self.states[k + 1]
        w = (t - a.t) / (b.t - a.t)
        return FlowState(
            t,
            (a.u * (1.0 - w) + b.u * w).with_time(t),
            (a.theta * (1.0 - w) + b.theta * w).with_time(t),
        )

    def norms(self) -> np.ndarray:
        return np.array([s.norm() for s in self.states])

    def extend(self, other: "Trajectory") -> "Trajectory":
        """Concatenate a continuation that starts at this trajectory's final time"""
        states = self.states + [s for s in other.states if s.t > self.final.t + 1e-14]
        diag = Diagnostics(dict(self.diagnostics.values), list(self.diagnostics.warnings))
        diag.values.update(other.diagnostics.values)
        diag.warnings.extend(other.diagnostics.warnings)
        return Trajectory(states, self.epsilon, self.ledger + other.ledger, diag)
