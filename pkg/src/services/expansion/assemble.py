"""
Assembly of the approximate solution from its profiles
"""
import logging
from dataclasses import dataclass
from typing import Dict

import numpy as np

from ..base import ExpansionMode, Side
from ..exceptions import ValidationError
from ..geometry.fields import Field
from ..solver.state import FlowState
from .bundle import ExpansionBundle
from .trace import MacPair


logger = logging.getLogger(__name__)


@dataclass
class ExpansionTerms:
    """Each profile of the expansion as a MAC or cell field, before the eps weights"""
    t: float
    epsilon: float
    u0: MacPair
    rho: MacPair
    first: MacPair
    grad_zeta: MacPair
    beta: MacPair
    theta0: np.ndarray
    theta1: np.ndarray
    truncated: int = 0

    def velocity(self) -> MacPair:
        """u0 + sqrt(eps) {rho} + eps (u1 + grad zeta + {beta})"""
        root = np.sqrt(self.epsilon)
        eps = self.epsilon
        return tuple(
            self.u0[c] + root * self.rho[c] + eps * (self.first[c] + self.grad_zeta[c] + self.beta[c])
            for c in range(2)
        )

    def correction(self) -> MacPair:
        """u1 + grad zeta + {beta}: the order-eps velocity profile"""
        return tuple(self.first[c] + self.grad_zeta[c] + self.beta[c] for c in range(2))

    def temperature(self) -> np.ndarray:
        return self.theta0 + self.epsilon ** 2 * self.theta1

    def norms(self) -> Dict[str, float]:
        return {
            "u0": float(max(np.max(np.abs(a)) for a in self.u0)),
            "rho": float(max(np.max(np.abs(a)) for a in self.rho)),
            "first": float(max(np.max(np.abs(a)) for a in self.first)),
            "grad_zeta": float(max(np.max(np.abs(a)) for a in self.grad_zeta)),
            "beta": float(max(np.max(np.abs(a)) for a in self.beta)),
            "theta1": float(np.max(np.abs(self.theta1))),
        }


def _zeros(bundle: ExpansionBundle) -> MacPair:
    return np.zeros(bundle.grid.shape("u")), np.zeros(bundle.grid.shape("v"))


def tapered_beta(bundle: ExpansionBundle, t: float):
    """chi beta per side as (tangential, normal) dictionaries"""
    technical = bundle.technical(t)
    coefficients = bundle.layer_coefficients(t)
    tangential, normal = {}, {}
    for side in Side:
        chi = coefficients[side].taper[:, None]
        tangential[side] = chi * technical.beta_tangential[side]
        normal[side] = chi * technical.beta_normal[side]
    return tangential, normal


def expansion_terms(bundle: ExpansionBundle, t: float) -> ExpansionTerms:
    grid = bundle.grid
    fu, fv, theta1 = bundle.first_order(t)
    theta0 = np.zeros(grid.shape("cell")) if bundle.theta0 is None else np.asarray(bundle.theta0, dtype=float)
    rho = grad_zeta = beta = _zeros(bundle)
    truncated = 0
    if bundle.has_layers:
        sampler = bundle.sampler()
        before = sampler.truncated
        rho = sampler.vector(tangential=bundle.rho(t))
        beta = sampler.vector(*tapered_beta(bundle, t))
        grad_zeta = bundle.technical(t).zeta_gradient(grid)
        truncated = sampler.truncated - before
    return ExpansionTerms(
        t=t,
        epsilon=bundle.epsilon,
        u0=bundle.base_velocity(t),
        rho=rho,
        first=(fu, fv),
        grad_zeta=grad_zeta,
        beta=beta,
        theta0=theta0,
        theta1=theta1,
        truncated=truncated,
    )


def assemble_expansion(bundle: ExpansionBundle, t: float) -> FlowState:
    """(u^eps, theta^eps) at time t; the pressure is left to its gauge"""
    terms = expansion_terms(bundle, t)
    if terms.truncated:
        logger.debug(f"Layer evaluated past z_max | t={t:.4f} | points={terms.truncated}")
    u, v = terms.velocity()
    grid = bundle.grid
    return FlowState(t, Field.vector(grid, u, v, t), Field.scalar(grid, terms.temperature(), t))


def remainder_of(bundle: ExpansionBundle, state: FlowState) -> FlowState:
    """(r, q) = ((u - u_app) / eps, (theta - theta_app) / eps^2) for a computed state"""
    approx = assemble_expansion(bundle, state.t)
    eps = bundle.epsilon
    return FlowState(
        state.t,
        ((state.u - approx.u) * (1.0 / eps)).with_time(state.t),
        ((state.theta - approx.theta) * (1.0 / eps ** 2)).with_time(state.t),
    )


def seam_mismatch(phase_one: ExpansionBundle, phase_two: ExpansionBundle, t: float) -> float:
    """Relative jump of the assembled state between the two tracking phases at t"""
    if phase_one.mode != ExpansionMode.TRACKING_1 or phase_two.mode != ExpansionMode.TRACKING_2:
        raise ValidationError("Seam check needs a phase-one and a phase-two bundle")
    a = assemble_expansion(phase_one, t)
    b = assemble_expansion(phase_two, t)
    scale = max(a.norm(), b.norm(), 1e-300)
    return a.minus(b).norm() / scale
