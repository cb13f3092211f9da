"""
Energy inequality audit and conservation diagnostics
"""
import logging
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from .state import Trajectory


logger = logging.getLogger(__name__)


@dataclass
class EnergyAudit:
    """Both sides of E(t) + int D <= E(0) + int W at every ledger time"""
    times: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    energy: np.ndarray
    tolerance: float
    violations: List[Tuple[float, float]] = field(default_factory=list)

    @property
    def max_violation(self) -> float:
        return max((v for _, v in self.violations), default=0.0)

    @property
    def passed(self) -> bool:
        return not self.violations

    @property
    def monotone(self) -> bool:
        """Energy nonincreasing within the tolerance"""
        if len(self.energy) < 2:
            return True
        scale = max(float(self.energy[0]), 1e-300)
        return bool(np.all(np.diff(self.energy) <= self.tolerance * scale))

    def summary(self) -> dict:
        return {
            "final_energy": float(self.energy[-1]) if len(self.energy) else 0.0,
            "max_violation": self.max_violation,
            "violations": len(self.violations),
            "monotone": self.monotone,
        }


def energy_audit(trajectory: Trajectory, tolerance: float = 1e-3) -> EnergyAudit:
    """Evaluate the discrete energy inequality along a trajectory ledger

    The dissipation already contains the boundary friction and heat
    transfer through the ghost rules; the work collects buoyancy, controls,
    the sigma |u|^2 + sigma theta^2 terms and the pressure work 2 int p sigma.
    """
    ledger = trajectory.ledger
    if not ledger:
        logger.warning("Trajectory has no energy ledger, nothing to audit")
        empty = np.zeros(0)
        return EnergyAudit(empty, empty, empty, empty, tolerance)

    times = np.array([r.t for r in ledger])
    energy = np.array([r.energy for r in ledger])
    dt = np.array([r.dt for r in ledger])
    lhs = energy + np.cumsum(dt * np.array([r.dissipation for r in ledger]))
    rhs = energy[0] + np.cumsum(dt * np.array([r.work for r in ledger]))

    audit = EnergyAudit(times, lhs, rhs, energy, tolerance)
    for t, left, right in zip(times, lhs, rhs):
        scale = max(abs(right), abs(energy[0]), 1e-300)
        excess = max(0.0, left - right) / scale
        if excess > tolerance:
            audit.violations.append((float(t), float(excess)))
    if audit.violations:
        logger.warning(
            f"⚠️ Energy inequality violated | count={len(audit.violations)} | max={audit.max_violation:.3e}"
        )
    else:
        logger.debug(f"Energy inequality holds | steps={len(ledger) - 1}")
    return audit


def mass_drift(trajectory: Trajectory) -> np.ndarray:
    """Relative drift of int theta; constant when m = 0 and w = 0"""
    area = trajectory.grid.cell_area
    masses = np.array([area * float(np.sum(s.theta.values)) for s in trajectory.states])
    scale = max(float(np.max(np.abs(masses))), 1e-300)
    return (masses - masses[0]) / scale
