"""
Carleman weight family built on an explicit eta0
"""
import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy.special import expit, logsumexp

from ..base import Diagnostics, check_positive
from ..config import CarlemanConfig
from ..exceptions import ValidationError
from ..geometry.grid import Box, Grid2D


logger = logging.getLogger(__name__)

# bump amplitudes tried in order until the gradient floor holds
BUMP_SWEEP = (0.0, 0.25, 0.5, 1.0)
TENT_SMOOTHING = 0.05
# smallest positive value kept in the exponential factors
UNDERFLOW = 1e-300


def _tent(x: np.ndarray, length: float, peak: float, width: float = TENT_SMOOTHING) -> Tuple[np.ndarray, np.ndarray]:
    """Smoothed min(x / peak, (L - x) / (L - peak)) and its derivative"""
    rising = x / peak
    falling = (length - x) / (length - peak)
    stacked = np.stack([-rising / width, -falling / width])
    value = -width * logsumexp(stacked, axis=0)
    share = expit((falling - rising) / width)
    slope = share / peak - (1.0 - share) / (length - peak)
    return value, slope


@dataclass
class CarlemanWeights:
    """alpha, xi and kappa from eta0 with max eta0 = 1

    eta0 vanishes on the walls of the box, so the extrema over the closed
    domain are attained at eta0 = 0 and eta0 = 1.
    """
    grid: Grid2D
    eta: np.ndarray
    eta_gradient: Tuple[np.ndarray, np.ndarray]
    region: Box
    s: float
    lam: float
    horizon: float
    delta: float = 0.0
    normalized: bool = True
    diagnostics: Diagnostics = field(default_factory=Diagnostics)

    @property
    def eta_max(self) -> float:
        return float(np.max(self.eta))

    def theta(self, t) -> np.ndarray:
        """t^4 (T - t)^4"""
        t = np.asarray(t, dtype=float)
        return np.clip(t, 0.0, self.horizon) ** 4 * np.clip(self.horizon - t, 0.0, self.horizon) ** 4

    def _over_theta(self, values, t):
        theta = self.theta(t)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(theta > 0.0, values / np.where(theta > 0.0, theta, 1.0), np.inf)

    def alpha(self, t, eta: Optional[np.ndarray] = None) -> np.ndarray:
        eta = self.eta if eta is None else eta
        top = np.exp(2.0 * self.lam * self.eta_max)
        return self._over_theta(top - np.exp(self.lam * eta), t)

    def xi(self, t, eta: Optional[np.ndarray] = None) -> np.ndarray:
        eta = self.eta if eta is None else eta
        return self._over_theta(np.exp(self.lam * eta), t)

    def alpha_star(self, t) -> np.ndarray:
        """max over the closed domain, reached on the walls"""
        return self._over_theta(np.exp(2.0 * self.lam * self.eta_max) - 1.0, t)

    def alpha_hat(self, t) -> np.ndarray:
        m = self.lam * self.eta_max
        return self._over_theta(np.exp(2.0 * m) - np.exp(m), t)

    def xi_star(self, t) -> np.ndarray:
        return self._over_theta(1.0, t)

    def xi_hat(self, t) -> np.ndarray:
        return self._over_theta(np.exp(self.lam * self.eta_max), t)

    def log_kappa(self, t) -> np.ndarray:
        """log of exp(4 s alpha_hat - 2 s alpha_star) xi_hat^{-15/2}

        4 alpha_hat - 2 alpha_star = 2 (e^{lam} - 1)^2 / theta is positive,
        so kappa grows without bound at both ends of the window.
        """
        m = self.lam * self.eta_max
        theta = self.theta(t)
        positive = theta > 0.0
        safe = np.where(positive, theta, 1.0)
        value = 2.0 * self.s * (np.exp(m) - 1.0) ** 2 / safe - 7.5 * (m - np.log(safe))
        return np.where(positive, value, np.inf)

    def log_kappa_inverse(self, t) -> np.ndarray:
        out = -self.log_kappa(t)
        if self.normalized:
            out = out + float(self.log_kappa(0.5 * self.horizon))
        return out

    def kappa(self, t) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(-self.log_kappa_inverse(t))

    def kappa_inverse(self, t) -> np.ndarray:
        """Control weight; zero where it underflows"""
        log_value = self.log_kappa_inverse(t)
        with np.errstate(under="ignore"):
            return np.where(log_value < np.log(UNDERFLOW), 0.0, np.exp(np.maximum(log_value, np.log(UNDERFLOW))))

    def control_weights(self, n_steps: int) -> np.ndarray:
        """kappa^{-1} at the step midpoints of a uniform grid on the window"""
        dt = self.horizon / n_steps
        return self.kappa_inverse((np.arange(n_steps) + 0.5) * dt)

    def log_damping(self, t, power: float = 2.0) -> np.ndarray:
        """-power s alpha(x, t) on the cells"""
        return -power * self.s * self.alpha(t)


def auto_s(lam: float, horizon: float) -> float:
    """Smallest s putting the peak of kappa^{-1} at mid-window"""
    peak_theta = (0.5 * horizon) ** 8
    return 7.5 * peak_theta / (2.0 * (np.exp(lam) - 1.0) ** 2)


def corner_zone(grid: Grid2D, fraction: float) -> np.ndarray:
    """Cells closer to a corner of the box than fraction * min(lx, ly)

    A C1 eta0 vanishing on two walls that meet at a corner has both partial
    derivatives zero there, so no weight of the box keeps |grad eta0| off
    zero at the four corners. The gradient floor is only checked outside
    this zone.
    """
    x, y = grid.coordinates("cell")
    radius = fraction * min(grid.lx, grid.ly)
    near = np.zeros(x.shape, dtype=bool)
    for cx in (0.0, grid.lx):
        for cy in (0.0, grid.ly):
            near |= np.hypot(x - cx, y - cy) < radius
    return near


def build_eta(grid: Grid2D, region: Box, delta: float) -> Tuple[np.ndarray, Tuple[np.ndarray, np.ndarray]]:
    """eta0 = P(x) Q(y) (1 + delta b) / max on the cells, with its gradient

    P and Q are smoothed tents peaking at the center of region, so the
    only critical point inside the box lies in region; b is a Gaussian
    bump centered there.
    """
    x, y = grid.coordinates("cell")
    cx, cy = region.center
    p, dp = _tent(x, grid.lx, cx)
    q, dq = _tent(y, grid.ly, cy)
    radius = 0.25 * min(region.width, region.height)
    bump = np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2.0 * radius ** 2))
    bx = -bump * (x - cx) / radius ** 2
    by = -bump * (y - cy) / radius ** 2
    eta = p * q * (1.0 + delta * bump)
    gx = (dp * q * (1.0 + delta * bump)) + p * q * delta * bx
    gy = (p * dq * (1.0 + delta * bump)) + p * q * delta * by
    scale = float(np.max(eta))
    return eta / scale, (gx / scale, gy / scale)


def build_weights(
    grid: Grid2D,
    horizon: float,
    config: Optional[CarlemanConfig] = None,
    region: Optional[Box] = None,
) -> CarlemanWeights:
    """Weights on [0, horizon] with eta0 peaking inside region (omega' by default)

    Raises ValidationError with the offending cells when no bump amplitude
    keeps |grad eta0| above the floor away from region and the corner
    zones (see ``corner_zone``; the gradient must vanish at the corners).
    """
    config = config or CarlemanConfig()
    horizon = check_positive("horizon", horizon)
    lam = check_positive("lam", config.lam)
    region = region or grid.omega_prime
    if not region.inside(grid.box, strict=True):
        raise ValidationError(f"Weight region {region} must lie strictly inside the box")

    x, y = grid.coordinates("cell")
    checked = ~region.contains(x, y) & ~corner_zone(grid, config.corner_exclusion)
    bad = None
    for delta in BUMP_SWEEP:
        eta, (gx, gy) = build_eta(grid, region, delta)
        size = np.hypot(gx, gy)
        floor = config.gradient_floor * float(np.max(size))
        bad = checked & (size <= floor)
        if not np.any(bad):
            break
    else:
        cells = [(int(i), int(j)) for i, j in np.argwhere(bad)]
        raise ValidationError(
            f"|grad eta0| falls below the floor on {len(cells)} cells",
            details={"cells": cells[:50], "count": len(cells), "floor": config.gradient_floor},
        )

    s = config.s if config.s is not None else auto_s(lam, horizon)
    weights = CarlemanWeights(
        grid=grid, eta=eta, eta_gradient=(gx, gy), region=region, s=check_positive("s", s), lam=lam,
        horizon=horizon, delta=delta, normalized=config.normalize,
    )
    gap = 4.0 * weights.alpha_hat(0.5 * horizon) - 2.0 * weights.alpha_star(0.5 * horizon)
    weights.diagnostics.record("kappa_exponent_gap", float(gap))
    weights.diagnostics.record("min_gradient_ratio", float(np.min(size[checked]) / np.max(size)) if np.any(checked) else 1.0)
    logger.info(
        f"Carleman weights | s={weights.s:.4e} | lam={lam:g} | delta={delta:g} | "
        f"min |grad eta|/max={weights.diagnostics.values['min_gradient_ratio']:.3f}"
    )
    return weights
