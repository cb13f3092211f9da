"""
Empirical Carleman constant over random adjoint runs
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.integrate import trapezoid

from ..geometry.calculus import faces_to_cells
from ..geometry.grid import Box
from ..solver.linearized import LinearizedSolver
from .functional import carleman_integrals
from .weights import UNDERFLOW, CarlemanWeights


logger = logging.getLogger(__name__)


@dataclass
class QuotientReport:
    """Per-run quotients; runs with zero data are skipped"""
    quotients: List[float] = field(default_factory=list)
    skipped: int = 0

    @property
    def max_quotient(self) -> Optional[float]:
        return max(self.quotients) if self.quotients else None

    def to_dict(self) -> dict:
        return {"max": self.max_quotient, "runs": len(self.quotients), "skipped": self.skipped}


def _raw_kappa_inverse(weights: CarlemanWeights, t: float) -> float:
    log_value = -float(weights.log_kappa(t))
    return 0.0 if log_value < np.log(UNDERFLOW) else float(np.exp(log_value))


def _cell_components(solver: LinearizedSolver, x: np.ndarray) -> np.ndarray:
    u, v, theta = solver.layout.unpack(x)
    uc, vc = faces_to_cells(u, v)
    return np.stack([uc, vc, theta])


def local_term(weights: CarlemanWeights, solver: LinearizedSolver, states: List[np.ndarray],
               region: Optional[Box] = None) -> float:
    """(1 + T^2) s^{15/2} lam^8 int kappa^{-1} int_region (|phi|^2 + |psi|^2)"""
    grid = weights.grid
    mask = grid.mask(region or grid.omega_c, "cell")
    times = solver.times()
    rows = []
    for t, x in zip(times, states):
        cells = _cell_components(solver, x)
        mass = grid.cell_area * float(np.sum(cells[:, mask] ** 2))
        rows.append(_raw_kappa_inverse(weights, t) * mass)
    prefactor = (1.0 + weights.horizon ** 2) * weights.s ** 7.5 * weights.lam ** 8
    return prefactor * float(trapezoid(rows, times))


def observed_functional(weights: CarlemanWeights, solver: LinearizedSolver, states: List[np.ndarray]) -> float:
    """I(s, lam; phi) + I(s, lam; psi) for packed adjoint states"""
    samples = [_cell_components(solver, x) for x in states]
    velocity = carleman_integrals(weights, solver.times(), [s[:2] for s in samples])
    temperature = carleman_integrals(weights, solver.times(), [s[2:] for s in samples])
    return (velocity + temperature).value(weights.s, weights.lam)


def carleman_quotient(
    weights: CarlemanWeights,
    solver: LinearizedSolver,
    samples: int = 4,
    seed: Optional[int] = None,
    terminal: Optional[List[np.ndarray]] = None,
) -> QuotientReport:
    """Largest left/right ratio of the local Carleman inequality over adjoint runs

    Terminal data are drawn at random (velocity part projected) unless
    given. The value is a diagnostic of the constant, not a bound.
    """
    if not np.isclose(solver.times()[-1] - solver.times()[0], weights.horizon):
        logger.warning(
            f"Adjoint window {solver.times()[-1] - solver.times()[0]:.4f} differs from the weight horizon {weights.horizon:.4f}"
        )
    rng = np.random.default_rng(seed)
    if terminal is None:
        terminal = []
        for _ in range(samples):
            x = rng.standard_normal(solver.state_size)
            x[: solver.layout.n_vel] = solver.projector.apply(x[: solver.layout.n_vel])
            terminal.append(x)

    report = QuotientReport()
    for k, data in enumerate(terminal):
        lams, _ = solver.adjoint_states(data)
        lhs = observed_functional(weights, solver, lams)
        rhs = local_term(weights, solver, lams)
        if rhs <= 0.0:
            report.skipped += 1
            logger.debug(f"Quotient run {k} skipped | lhs={lhs:.3e} | rhs={rhs:.3e}")
            continue
        report.quotients.append(lhs / rhs)
        logger.debug(f"Quotient run {k} | lhs={lhs:.3e} | rhs={rhs:.3e} | ratio={lhs / rhs:.3e}")

    logger.info(f"Carleman quotient | runs={len(report.quotients)} | skipped={report.skipped} | max={report.max_quotient}")
    return report
