"""
Convergence rates of remainder norms against eps
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..exceptions import ValidationError


logger = logging.getLogger(__name__)


@dataclass
class RateFit:
    """log(norm) = slope * log(eps) + intercept"""
    slope: float
    intercept: float
    residual: float
    monotone: bool
    decades: float
    claimed: Optional[float] = None
    warnings: List[str] = field(default_factory=list)

    @property
    def meets_claim(self) -> Optional[bool]:
        if self.claimed is None:
            return None
        return bool(self.slope >= self.claimed - 0.05)

    def to_dict(self) -> Dict[str, object]:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "residual": self.residual,
            "monotone": self.monotone,
            "decades": self.decades,
            "claimed": self.claimed,
            "meets_claim": self.meets_claim,
            "warnings": list(self.warnings),
        }


def rate_fit(epsilons: Sequence[float], norms: Sequence[float], claimed: Optional[float] = None) -> RateFit:
    """Least-squares slope of log(norms) against log(epsilons)

    Needs three or more positive samples. Non-monotone norms are fitted
    anyway and flagged; a span under one decade only warns.
    """
    eps = np.asarray(epsilons, dtype=float)
    values = np.asarray(norms, dtype=float)
    if eps.shape != values.shape or eps.ndim != 1:
        raise ValidationError(f"Rate fit needs matching 1-D samples, got {eps.shape} and {values.shape}")
    if eps.size < 3:
        raise ValidationError(f"Rate fit needs at least 3 eps values, got {eps.size}", details={"count": int(eps.size)})
    if np.any(eps <= 0.0) or np.any(values <= 0.0) or not np.all(np.isfinite(values)):
        raise ValidationError("Rate fit needs positive finite eps values and norms")

    order = np.argsort(eps)
    eps, values = eps[order], values[order]
    x, y = np.log(eps), np.log(values)
    (slope, intercept), residuals, *_ = np.polyfit(x, y, 1, full=True)
    residual = float(np.sqrt(residuals[0] / eps.size)) if residuals.size else 0.0
    steps = np.diff(values)
    monotone = bool(np.all(steps >= 0.0) or np.all(steps <= 0.0))
    decades = float(np.log10(eps[-1] / eps[0]))

    fit = RateFit(float(slope), float(intercept), residual, monotone, decades, claimed)
    if decades < 1.0:
        fit.warnings.append(f"eps spans {decades:.2f} decades")
    if not monotone:
        fit.warnings.append("norms are not monotone in eps")
    status = "✅" if fit.meets_claim in (None, True) else "⚠️"
    logger.info(
        f"{status} Rate fit | slope={fit.slope:.3f} | claimed={claimed} | residual={residual:.2e} | "
        f"decades={decades:.2f} | monotone={monotone}"
    )
    for message in fit.warnings:
        logger.warning(f"Rate fit: {message}")
    return fit


def claimed_rate(mode: str, claimed_rates: Dict[str, float]) -> Optional[float]:
    """Claimed exponent of the squared remainder norm for an expansion mode"""
    if mode == "slip":
        return claimed_rates.get("slip")
    if mode in ("friction", "tracking-phase-1", "tracking-phase-2"):
        return claimed_rates.get("friction")
    return None
