"""
Weighted Carleman integrals of sampled trajectories
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Sequence

import numpy as np
from scipy.integrate import trapezoid

from ..geometry.calculus import cell_gradient, faces_to_cells
from ..geometry.fields import Field
from ..solver.state import FlowState
from .weights import UNDERFLOW, CarlemanWeights


logger = logging.getLogger(__name__)

LOG_FLOOR = float(np.log(UNDERFLOW))


def _weighted(log_factor: np.ndarray) -> np.ndarray:
    """exp(log_factor), set to 0 below the underflow floor"""
    with np.errstate(under="ignore", invalid="ignore"):
        safe = np.where(np.isfinite(log_factor), log_factor, -np.inf)
        return np.where(safe < LOG_FLOOR, 0.0, np.exp(np.maximum(safe, LOG_FLOOR)))


def _laplacian(values: np.ndarray, hx: float, hy: float) -> np.ndarray:
    dxx = np.gradient(np.gradient(values, hx, axis=0, edge_order=2), hx, axis=0, edge_order=2)
    dyy = np.gradient(np.gradient(values, hy, axis=1, edge_order=2), hy, axis=1, edge_order=2)
    return dxx + dyy


@dataclass
class CarlemanIntegrals:
    """The three weighted integrals with the s and lam prefactors left out

    zero_order = int e^{-2 s alpha} xi^3 |phi|^2, first_order = int e^{-2 s alpha} xi |grad phi|^2,
    second_order = int e^{-2 s alpha} xi^{-1} (|phi_t|^2 + |Lap phi|^2).
    """
    zero_order: float
    first_order: float
    second_order: float

    def terms(self, s: float, lam: float) -> Dict[str, float]:
        return {
            "zero_order": s ** 3 * lam ** 4 * self.zero_order,
            "first_order": s * lam ** 2 * self.first_order,
            "second_order": self.second_order / s,
        }

    def value(self, s: float, lam: float) -> float:
        return float(sum(self.terms(s, lam).values()))

    def __add__(self, other: "CarlemanIntegrals") -> "CarlemanIntegrals":
        return CarlemanIntegrals(
            self.zero_order + other.zero_order,
            self.first_order + other.first_order,
            self.second_order + other.second_order,
        )


def component_samples(states: Sequence[FlowState], part: str) -> List[np.ndarray]:
    """Cell-centered components of the velocity ("velocity") or temperature ("temperature")"""
    if part == "temperature":
        return [np.asarray(s.theta.values)[None] for s in states]
    return [np.stack(faces_to_cells(s.u.u, s.u.v)) for s in states]


def carleman_integrals(weights: CarlemanWeights, times: np.ndarray, samples: Sequence[np.ndarray]) -> CarlemanIntegrals:
    """Integrals over (0, T) x O of samples (components, nx, ny) taken at times"""
    grid = weights.grid
    times = np.asarray(times, dtype=float)
    stack = np.asarray(samples, dtype=float)
    if stack.ndim == 3:
        stack = stack[:, None]
    if len(times) > 1:
        rate = np.gradient(stack, times, axis=0)
    else:
        rate = np.zeros_like(stack)

    area = grid.cell_area
    rows = {"zero_order": [], "first_order": [], "second_order": []}
    for k, t in enumerate(times):
        with np.errstate(divide="ignore", invalid="ignore"):
            damping = weights.log_damping(t)
            log_xi = np.log(weights.xi(t))
            factors = [_weighted(damping + 3.0 * log_xi), _weighted(damping + log_xi), _weighted(damping - log_xi)]
        zero = first = second = 0.0
        for c in range(stack.shape[1]):
            phi = stack[k, c]
            gx, gy = cell_gradient(phi, grid)
            lap = _laplacian(phi, grid.hx, grid.hy)
            zero += np.sum(factors[0] * phi ** 2)
            first += np.sum(factors[1] * (gx ** 2 + gy ** 2))
            second += np.sum(factors[2] * (rate[k, c] ** 2 + lap ** 2))
        rows["zero_order"].append(area * zero)
        rows["first_order"].append(area * first)
        rows["second_order"].append(area * second)

    if len(times) == 1:
        return CarlemanIntegrals(*(float(rows[name][0]) for name in ("zero_order", "first_order", "second_order")))
    return CarlemanIntegrals(*(float(trapezoid(rows[name], times)) for name in ("zero_order", "first_order", "second_order")))


def carleman_functional(weights: CarlemanWeights, states: Sequence[FlowState], part: str = "velocity",
                        s: float = None, lam: float = None) -> float:
    """I(s, lam; phi) for a sampled trajectory"""
    times = np.array([state.t for state in states])
    integrals = carleman_integrals(weights, times, component_samples(states, part))
    return integrals.value(weights.s if s is None else s, weights.lam if lam is None else lam)


def scalar_functional(weights: CarlemanWeights, times: np.ndarray, fields: Sequence[Field]) -> float:
    """I(s, lam; psi) for a list of scalar fields"""
    integrals = carleman_integrals(weights, times, [np.asarray(f.values)[None] for f in fields])
    return integrals.value(weights.s, weights.lam)
