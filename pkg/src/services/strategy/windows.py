"""
Time windows of the four-step strategy and the divergence ramp
"""
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from ..base import check_positive
from ..exceptions import ValidationError
from ..flushing.partition import cutoff


# beta(s) = 1 for s <= RAMP_END[0], 0 for s >= RAMP_END[1], s = t / T
RAMP_END = (1.0 / 32.0, 3.0 / 32.0)


def divergence_ramp(t, horizon: float):
    """beta(t / T): decreasing, 1 near 0 and 0 well before T / 8"""
    lo, hi = RAMP_END
    s = np.asarray(t, dtype=float) / horizon
    return cutoff(s - 0.5 * (lo + hi), 0.5 * (hi - lo))


@dataclass(frozen=True)
class StepWindows:
    """[0, T1], [T1, T/2], [T/2, T3], [T3, T3 + T/4], then free until T"""
    horizon: float
    t1: float
    t3: float

    def __post_init__(self):
        T = self.horizon
        if not (RAMP_END[1] * T <= self.t1 <= T / 8.0 + 1e-12):
            raise ValidationError(f"T1={self.t1:.4f} must lie in [{RAMP_END[1] * T:.4f}, {T / 8.0:.4f}]")
        if not (T / 2.0 <= self.t3 and self.t3 + T / 4.0 <= T + 1e-12):
            raise ValidationError(f"T3={self.t3:.4f} must lie in [{T / 2.0:.4f}, {0.75 * T:.4f}]")

    @property
    def t2(self) -> float:
        return 0.5 * self.horizon

    @property
    def t4(self) -> float:
        return self.t3 + 0.25 * self.horizon

    def steps(self) -> Tuple[Tuple[str, float, float], ...]:
        return (
            ("regularize", 0.0, self.t1),
            ("approximate", self.t1, self.t2),
            ("settle", self.t2, self.t3),
            ("local", self.t3, self.t4),
            ("free", self.t4, self.horizon),
        )

    def as_dict(self) -> dict:
        return {"T1": self.t1, "T2": self.t2, "T3": self.t3, "T4": self.t4, "T": self.horizon}


def scan_window(horizon: float, which: str) -> Tuple[float, float]:
    """Where T1 ("t1") or T3 ("t3") is searched"""
    horizon = check_positive("horizon", horizon)
    if which == "t1":
        return RAMP_END[1] * horizon, horizon / 8.0
    if which == "t3":
        return horizon / 2.0, 5.0 * horizon / 8.0
    raise ValidationError(f"Unknown scan window: {which}")
