"""
Norm machinery: Korn audit, boundary-weighted norms and weighted-in-z norms
"""
import logging
from dataclasses import dataclass
from typing import Iterable, Optional, Tuple

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import brentq

from ..base import FieldKind, Side
from ..exceptions import ValidationError
from .boundary import BoundaryCoefficients, normal_flux, velocity_gradient_cells, wall_trace
from .calculus import cell_gradient, divergence
from .fields import Field


logger = logging.getLogger(__name__)

TAIL_TOLERANCE = 1e-8


@dataclass
class KornReport:
    l2: float
    deformation: float
    h1: float
    ratio: float
    km_norm: Optional[float] = None
    gm_norm: Optional[float] = None
    admissible: bool = True


def korn_audit(
    u: Field,
    coeffs: Optional[BoundaryCoefficients] = None,
    theta: Optional[Field] = None,
    k_weight: float = 1.0,
    gamma_weight: float = 1.0,
    tol: float = 1e-8,
) -> KornReport:
    """Report ||u||, ||D(u)||, ||u||_H1 and the Korn ratio ||u||_H1 / (||u|| + ||D(u)||)"""
    if u.kind != FieldKind.VECTOR:
        raise ValidationError("korn_audit expects a vector field")
    grid = u.grid
    area = grid.cell_area

    div = divergence(u.u, u.v, grid)
    flux = max(float(np.max(np.abs(f))) for f in normal_flux(u).values())
    scale = max(u.max_abs(), 1e-300)
    admissible = bool(np.max(np.abs(div)) * min(grid.hx, grid.hy) <= tol * scale and flux <= tol * scale)
    if not admissible and u.max_abs() > 0:
        logger.warning(f"Korn audit on a field that is not divergence-free and tangent | max div={np.max(np.abs(div)):.3e} | max flux={flux:.3e}")

    cx, cy, grad = velocity_gradient_cells(u)
    deformation = 0.5 * (grad + np.swapaxes(grad, -1, -2))
    l2_sq = float(np.sum(cx ** 2 + cy ** 2) * area)
    grad_sq = float(np.sum(grad ** 2) * area)
    def_sq = float(np.sum(deformation ** 2) * area)

    l2 = np.sqrt(l2_sq)
    dnorm = np.sqrt(def_sq)
    h1 = np.sqrt(l2_sq + grad_sq)
    denom = l2 + dnorm
    ratio = float(h1 / denom) if denom > 0 else 0.0

    report = KornReport(l2=float(l2), deformation=float(dnorm), h1=float(h1), ratio=ratio, admissible=admissible)
    if coeffs is not None:
        report.km_norm = boundary_weighted_velocity_norm(u, coeffs, k_weight)
        if theta is not None:
            report.gm_norm = boundary_weighted_temperature_norm(theta, coeffs, gamma_weight)
    return report


def korn_constants(samples: Iterable[Field]) -> Tuple[float, float]:
    """Empirical (C1, C2) over an ensemble of admissible fields"""
    ratios = [r.ratio for r in (korn_audit(u) for u in samples) if r.h1 > 0]
    if not ratios:
        return 0.0, 0.0
    return float(min(ratios)), float(max(ratios))


def _friction_boundary_term(u: Field, coeffs: BoundaryCoefficients) -> float:
    cx, cy = u.cell_vectors()
    total = 0.0
    for side in Side:
        wall = np.stack([wall_trace(cx, side), wall_trace(cy, side)], axis=1)
        ds = u.grid.hy if side.axis == 0 else u.grid.hx
        total += float(np.einsum("ni,nij,nj->", wall, coeffs.friction[side], wall) * ds)
    return total


def boundary_weighted_velocity_norm(u: Field, coeffs: BoundaryCoefficients, k_weight: float = 1.0) -> float:
    """||u||_{K,M}^2 = K||u||^2 + int_dO M u.u + ||D(u)||^2"""
    grid = u.grid
    cx, cy, grad = velocity_gradient_cells(u)
    deformation = 0.5 * (grad + np.swapaxes(grad, -1, -2))
    value = (
        k_weight * np.sum(cx ** 2 + cy ** 2) * grid.cell_area
        + _friction_boundary_term(u, coeffs)
        + np.sum(deformation ** 2) * grid.cell_area
    )
    return float(np.sqrt(max(value, 0.0)))


def boundary_weighted_temperature_norm(theta: Field, coeffs: BoundaryCoefficients, gamma_weight: float = 1.0) -> float:
    """||theta||_{gamma,m}^2 = gamma||theta||^2 + int_dO m theta^2 + ||grad theta||^2"""
    grid = theta.grid
    gx, gy = cell_gradient(theta.values, grid)
    boundary = 0.0
    for side in Side:
        ds = grid.hy if side.axis == 0 else grid.hx
        boundary += float(np.sum(coeffs.heat[side] * wall_trace(theta.values, side) ** 2) * ds)
    value = gamma_weight * np.sum(theta.values ** 2) * grid.cell_area + boundary + np.sum(gx ** 2 + gy ** 2) * grid.cell_area
    return float(np.sqrt(max(value, 0.0)))


def half_line_grid(z_max: float = 40.0, n: int = 128, first_step: float = 0.01) -> np.ndarray:
    """Geometrically stretched grid on [0, z_max], finest at z = 0"""
    if n < 3 or z_max <= 0 or first_step <= 0:
        raise ValidationError("half_line_grid needs n >= 3 and positive z_max, first_step")
    segments = n - 1
    if first_step * segments >= z_max:
        return np.linspace(0.0, z_max, n)

    def total(r: float) -> float:
        return first_step * (r ** segments - 1.0) / (r - 1.0) - z_max

    ratio = brentq(total, 1.0 + 1e-12, 2.0)
    steps = first_step * ratio ** np.arange(segments)
    z = np.concatenate([[0.0], np.cumsum(steps)])
    z[-1] = z_max
    return z


def weighted_z_norm(g: np.ndarray, z: np.ndarray, s: int = 0, k: float = 0.0, axis: int = -1) -> np.ndarray:
    """Squared H^{s,k} norm: sum_{j<=s} int (1+z^2)^k |d^j g / dz^j|^2 dz (trapezoid)

    ``g`` may carry leading axes (e.g. collar row and wall position); the
    result keeps them.
    """
    if s < 0 or k < 0:
        raise ValidationError(f"weighted_z_norm needs s >= 0 and k >= 0, got s={s}, k={k}")
    g = np.moveaxis(np.asarray(g, dtype=float), axis, -1)
    weight = (1.0 + z ** 2) ** k
    total = np.zeros(g.shape[:-1])
    derivative = g
    for order in range(s + 1):
        if order > 0:
            derivative = np.gradient(derivative, z, axis=-1, edge_order=2)
        total = total + trapezoid(weight * derivative ** 2, z, axis=-1)

    tail = weight[-1] * g[..., -1] ** 2 * max(z[-1] - z[-2], 1.0)
    if np.any(tail > TAIL_TOLERANCE * np.maximum(total, 1e-300)) and np.any(total > 0):
        logger.warning(f"Profile does not decay at the truncation | z_max={z[-1]:.1f} | tail={np.max(tail):.3e}")
    return total if total.ndim else float(total)
