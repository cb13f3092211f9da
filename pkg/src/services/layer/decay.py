"""
Free decay of a layer after the horizon and power-law fits of its norm
"""
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..base import Diagnostics
from ..exceptions import ValidationError
from .heat import HalfLineStepper
from .profile import LayerProfile


logger = logging.getLogger(__name__)

ABSCISSAS = ("power", "log-power")


def target_exponent(m: float, k: int) -> float:
    """Decay exponent of ||rho||_{H^{0,m}_z} once k moments vanish"""
    return 0.25 + 0.5 * k - 0.5 * m


@dataclass
class DecayTimeline:
    """Norm of a freely decaying layer; times are measured from the handoff"""
    times: np.ndarray
    norms: np.ndarray
    z_weight: float = 0.0
    x_derivatives: int = 0

    @property
    def span_decades(self) -> float:
        positive = self.times[self.times > 0]
        if len(positive) < 2:
            return 0.0
        return float(np.log10(positive[-1] / positive[0]))


def decay_timeline(
    profile: LayerProfile,
    duration: float,
    samples: int = 400,
    first: float = 1e-2,
    z_weight: float = 0.0,
    x_derivatives: int = 0,
    stepper: Optional[HalfLineStepper] = None,
) -> DecayTimeline:
    """March the pure half-line heat equation (u0 = 0, v_rho = 0) on geometric steps"""
    if duration <= first:
        raise ValidationError(f"Decay duration {duration} must exceed the first step {first}")
    stepper = stepper or HalfLineStepper(profile.z)
    times = np.concatenate([[0.0], np.geomspace(first, duration, samples)])
    norms = np.empty(len(times))
    values = profile.values
    norms[0] = profile.norm(x_derivatives, z_weight)
    for k in range(1, len(times)):
        values = stepper.advance(values, times[k] - times[k - 1])
        norms[k] = profile.with_values(values).norm(x_derivatives, z_weight)
    return DecayTimeline(times=times, norms=norms, z_weight=z_weight, x_derivatives=x_derivatives)


@dataclass
class DecayFit:
    exponent: float
    target: float
    residual: float
    abscissa: str
    span_decades: float
    diagnostics: Diagnostics = field(default_factory=Diagnostics)

    @property
    def gap(self) -> float:
        return self.exponent - self.target


def measure_decay(
    timeline: DecayTimeline,
    m: Optional[float] = None,
    k: int = 0,
    abscissa: str = "power",
    start: Optional[float] = None,
) -> DecayFit:
    """Least-squares exponent of ||rho(t)|| against log(2 + t) or log(log(2 + t)/(2 + t))

    The fit uses the samples after start (last time / 100 by default, the
    final two decades).
    """
    if abscissa not in ABSCISSAS:
        raise ValidationError(f"Unknown decay abscissa {abscissa!r}; expected one of {ABSCISSAS}")
    m = timeline.z_weight if m is None else m
    start = timeline.times[-1] / 100.0 if start is None else start
    keep = (timeline.times >= start) & (timeline.norms > 0)
    if np.count_nonzero(keep) < 3:
        raise ValidationError("Decay fit needs at least three positive samples")
    t = timeline.times[keep]
    y = np.log(timeline.norms[keep])
    if abscissa == "power":
        x = np.log(2.0 + t)
        sign = -1.0
    else:
        x = np.log(np.log(2.0 + t) / (2.0 + t))
        sign = 1.0
    slope, intercept = np.polyfit(x, y, 1)
    residual = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    fit = DecayFit(
        exponent=float(sign * slope),
        target=target_exponent(m, k),
        residual=residual,
        abscissa=abscissa,
        span_decades=float(np.log10(t[-1] / t[0])) if t[0] > 0 else timeline.span_decades,
    )
    if timeline.span_decades < 2.0:
        message = f"Decay timeline spans only {timeline.span_decades:.2f} decades"
        fit.diagnostics.warn(message)
        logger.warning(f"⚠️ {message}")
    logger.info(
        f"Decay fit | exponent={fit.exponent:.3f} | target={fit.target:.3f} | residual={residual:.2e} | abscissa={abscissa}"
    )
    return fit
