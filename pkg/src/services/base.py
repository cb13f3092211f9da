"""
Base interfaces and shared value types for the control lab services
"""
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from .exceptions import ValidationError


class FieldKind(Enum):
    SCALAR = "scalar"
    VECTOR = "vector"


class Side(Enum):
    LEFT = "left"
    RIGHT = "right"
    BOTTOM = "bottom"
    TOP = "top"

    @property
    def axis(self) -> int:
        """Axis normal to the side (0 for x, 1 for y)"""
        return 0 if self in (Side.LEFT, Side.RIGHT) else 1

    @property
    def normal(self) -> np.ndarray:
        """Outward unit normal"""
        return {
            Side.LEFT: np.array([-1.0, 0.0]),
            Side.RIGHT: np.array([1.0, 0.0]),
            Side.BOTTOM: np.array([0.0, -1.0]),
            Side.TOP: np.array([0.0, 1.0]),
        }[self]

    @property
    def tangent(self) -> np.ndarray:
        """Unit tangent, oriented along the increasing coordinate"""
        return np.array([0.0, 1.0]) if self.axis == 0 else np.array([1.0, 0.0])

    @property
    def is_upper(self) -> bool:
        return self in (Side.RIGHT, Side.TOP)


class ExpansionMode(Enum):
    SLIP = "slip"
    FRICTION = "friction"
    TRACKING_1 = "tracking-phase-1"
    TRACKING_2 = "tracking-phase-2"


class Direction(Enum):
    FORWARD = "forward"
    BACKWARD = "backward"


@dataclass
class TimeSeries:
    """Samples of an arbitrary quantity on an increasing time grid"""
    times: np.ndarray
    values: List[Any]

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if len(self.times) != len(self.values):
            raise ValidationError(
                f"Time series length mismatch | times={len(self.times)} | values={len(self.values)}"
            )
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValidationError("Time series requires strictly increasing times")

    def __len__(self) -> int:
        return len(self.times)

    @property
    def start(self) -> float:
        return float(self.times[0])

    @property
    def end(self) -> float:
        return float(self.times[-1])

    def at(self, t: float) -> Any:
        """Linear interpolation in time, clamped to the sampled interval"""
        if len(self.times) == 1 or t <= self.times[0]:
            return self.values[0]
        if t >= self.times[-1]:
            return self.values[-1]
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        t0, t1 = self.times[k], self.times[k + 1]
        w = (t - t0) / (t1 - t0)
        if w == 0.0:
            return self.values[k]
        return (1.0 - w) * self.values[k] + w * self.values[k + 1]

    def map(self, func: Callable[[Any], Any]) -> "TimeSeries":
        return TimeSeries(self.times.copy(), [func(v) for v in self.values])

    def shifted(self, offset: float) -> "TimeSeries":
        return TimeSeries(self.times + offset, list(self.values))


@dataclass
class Diagnostics:
    """Named scalar diagnostics attached to a run"""
    values: Dict[str, float] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)

    def record(self, name: str, value: float) -> None:
        self.values[name] = float(value)

    def warn(self, message: str) -> None:
        self.warnings.append(message)


class LinearControlSystem(ABC):
    """Discrete-time linear system x^{n+1} = S_n x^n + dt B_n c^n

    Implementations expose the forward map, its exact transpose and the
    inner-product weight used for states and controls.
    """

    @property
    @abstractmethod
    def n_steps(self) -> int:
        pass

    @property
    @abstractmethod
    def dt(self) -> float:
        pass

    @property
    @abstractmethod
    def state_size(self) -> int:
        pass

    @property
    @abstractmethod
    def control_size(self) -> int:
        pass

    @property
    def weight(self) -> float:
        """Quadrature weight of one state or control entry"""
        return 1.0

    @abstractmethod
    def propagate(self, x0: np.ndarray, controls: Optional[np.ndarray] = None) -> np.ndarray:
        """Terminal state for initial state x0 and controls of shape (n_steps, control_size)"""
        pass

    @abstractmethod
    def backpropagate(self, terminal: np.ndarray) -> np.ndarray:
        """Control gradients g^n = d<x^N, terminal>/dc^n, shape (n_steps, control_size)"""
        pass

    @abstractmethod
    def control_weights(self) -> np.ndarray:
        """Inverse control weights kappa^{-1} per step, shape (n_steps,)"""
        pass

    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def inner(self, a: np.ndarray, b: np.ndarray) -> float:
        return float(self.weight * np.dot(a, b))

    def norm(self, a: np.ndarray) -> float:
        return float(np.sqrt(max(self.inner(a, a), 0.0)))


class TimeStepper(ABC):
    """Interface of the time marching solvers"""

    @abstractmethod
    def run(self, initial: Any, t_end: float, **kwargs) -> Any:
        pass


def check_positive(name: str, value: float) -> float:
    if not np.isfinite(value) or value <= 0:
        raise ValidationError(f"{name} must be positive, got {value}")
    return float(value)


def check_finite(name: str, values: Sequence[float]) -> None:
    if not np.all(np.isfinite(np.asarray(values))):
        raise ValidationError(f"{name} contains non-finite values")
