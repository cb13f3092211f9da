"""
Dense least-squares solution of the penalized control problem
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..base import LinearControlSystem, check_positive
from ..exceptions import ValidationError


logger = logging.getLogger(__name__)

CONDITION_LIMIT = 1e14
DENSE_LIMIT = 500


@dataclass
class OracleSolution:
    controls: np.ndarray
    terminal_state: np.ndarray
    cost: float
    condition: float


def control_matrix(system: LinearControlSystem) -> np.ndarray:
    """M with x^N = x_free + M vec(c), one backward sweep per state unknown"""
    rows = []
    for i in range(system.state_size):
        unit = np.zeros(system.state_size)
        unit[i] = 1.0
        rows.append(system.backpropagate(unit).ravel())
    return np.array(rows)


def gramian_oracle(
    system: LinearControlSystem,
    x0: np.ndarray,
    penalty: float,
    kappa_inverse: Optional[np.ndarray] = None,
) -> OracleSolution:
    """Minimize 1/2 sum dt kappa w |c|^2 + 1/(2 penalty) w |x^N|^2 in one lstsq solve

    With c = sqrt(kappa^{-1} / dt) y the problem is min |y|^2 + |x_free + M S y|^2 / penalty.
    """
    penalty = check_positive("penalty", penalty)
    if system.state_size > DENSE_LIMIT:
        logger.warning(f"Gramian oracle on {system.state_size} unknowns, dense algebra will be slow")
    kinv = system.control_weights() if kappa_inverse is None else np.asarray(kappa_inverse, dtype=float)
    if kinv.shape != (system.n_steps,):
        raise ValidationError(f"kappa_inverse must have shape ({system.n_steps},), got {kinv.shape}")

    x0 = np.asarray(x0, dtype=float)
    x_free = system.propagate(x0)
    M = control_matrix(system)
    scale = np.repeat(np.sqrt(kinv / system.dt), system.control_size)
    MS = M * scale[None, :]
    root = np.sqrt(penalty)
    A = np.vstack([MS / root, np.eye(MS.shape[1])])
    rhs = np.concatenate([-x_free / root, np.zeros(MS.shape[1])])
    y, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    condition = float(np.linalg.cond(A))
    if condition > CONDITION_LIMIT:
        logger.warning(f"Gramian oracle is ill-conditioned | cond={condition:.2e}")

    controls = (scale * y).reshape(system.n_steps, system.control_size)
    terminal = x_free + MS @ y
    w = system.weight
    cost = 0.5 * w * float(y @ y) + 0.5 * w * float(terminal @ terminal) / penalty
    logger.info(f"Gramian oracle | unknowns={y.size} | cond={condition:.2e} | cost={cost:.6e}")
    return OracleSolution(controls, terminal, cost, condition)
