"""
Technical profiles beta, zeta and psi that repair the layer's boundary and divergence defects
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np
from scipy.interpolate import interp1d

from ..base import Diagnostics, Side
from ..exceptions import CompatibilityError, GridMismatchError, ValidationError
from ..geometry.boundary import BoundaryCoefficients
from ..geometry.calculus import cell_gradient, cells_to_faces, face_gradient
from ..geometry.grid import Grid2D
from ..solver.poisson import PoissonSolver
from .profile import LayerCoefficients, LayerProfile, corner_taper, layer_norm, tail_integral


logger = logging.getLogger(__name__)

COMPATIBILITY_TOLERANCE = 1e-10


@dataclass
class TechnicalProfiles:
    """beta = (tangential, normal) parts per side, zeta on the cells and psi per side"""
    epsilon: float
    z: np.ndarray
    beta_tangential: Dict[Side, np.ndarray]
    beta_normal: Dict[Side, np.ndarray]
    psi: Dict[Side, np.ndarray]
    beta_field: Tuple[np.ndarray, np.ndarray]
    zeta: np.ndarray
    compatibility: float
    report: Dict[str, float] = field(default_factory=dict)
    diagnostics: Diagnostics = field(default_factory=Diagnostics)

    def beta(self, side: Side) -> np.ndarray:
        """beta on one side as (n_side, nz, 2) vectors"""
        return self.beta_tangential[side][..., None] * side.tangent + self.beta_normal[side][..., None] * side.normal

    def zeta_gradient(self, grid: Grid2D) -> Tuple[np.ndarray, np.ndarray]:
        return face_gradient(self.zeta, grid)


def _beta_parts(profile: LayerProfile, friction: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """-2 e^{-z} N(rho)(s, 0) tau and -nu int_z^inf d_s rho dz'

    On a flat side the x-level deformation of a tangential rho has no
    tangential normal-stress part, so N(rho)(s, 0) reduces to the friction
    term M rho(s, 0).
    """
    r = profile.values
    ds = float(profile.s[1] - profile.s[0])
    tangential = -2.0 * np.exp(-profile.z)[None, :] * (friction * r[:, 0])[:, None]
    divergence = np.gradient(r, ds, axis=0, edge_order=2)
    normal = -tail_integral(divergence, profile.z)
    return tangential, normal


def _in_domain(values: np.ndarray, z: np.ndarray, grid: Grid2D, side: Side, epsilon: float) -> np.ndarray:
    """{f}: f(s, phi/sqrt(eps)) on the cells, zero past z_max"""
    h = grid.hx if side.axis == 0 else grid.hy
    depth = grid.nx if side.axis == 0 else grid.ny
    rows = (np.arange(depth) + 0.5) * h / np.sqrt(epsilon)
    sampled = interp1d(z, values, axis=1, bounds_error=False, fill_value=0.0, assume_sorted=True)(rows)
    return grid.collar_scatter(sampled.T, side)


def technical_profiles(
    profiles: Dict[Side, LayerProfile],
    coefficients: Dict[Side, LayerCoefficients],
    coeffs: BoundaryCoefficients,
    epsilon: float,
    grid: Grid2D,
    poisson_tol: float = 1e-10,
) -> TechnicalProfiles:
    """beta, zeta^eps and psi for the current layer

    zeta solves Lap zeta = -div {beta} with d zeta/d nu = -beta(s, 0) . nu;
    on the staggered grid this is a homogeneous Neumann problem for the
    interior-face divergence of {beta}, whose sum vanishes identically.
    """
    if epsilon <= 0:
        raise ValidationError(f"epsilon must be positive, got {epsilon}")
    if not grid.same_as(coeffs.grid):
        raise GridMismatchError("Layer profiles and boundary coefficients live on different grids")
    z = next(iter(profiles.values())).z
    beta_t, beta_n, psi = {}, {}, {}
    cx = np.zeros(grid.shape("cell"))
    cy = np.zeros(grid.shape("cell"))
    for side, profile in profiles.items():
        tangential, normal = _beta_parts(profile, coeffs.tangential_friction(side))
        beta_t[side], beta_n[side] = tangential, normal
        # flat side: only (rho.grad)u0 has a normal part, r d_s(u0 . nu)
        psi[side] = -tail_integral(profile.values * coefficients[side].normal_slope[:, None], z)

        length = grid.ly if side.axis == 0 else grid.lx
        ds = grid.side_spacing(side)[1]
        chi = corner_taper(profile.s, length, grid.collar_rows * ds)[:, None]
        for part, direction in ((tangential, side.tangent), (normal, side.normal)):
            cells = _in_domain(chi * part, z, grid, side, epsilon)
            cx += direction[0] * cells
            cy += direction[1] * cells

    bu, bv = cells_to_faces(cx, cy)
    bu[0] = bu[-1] = 0.0
    bv[:, 0] = bv[:, -1] = 0.0
    rhs = (bu[1:] - bu[:-1]) / grid.hx + (bv[:, 1:] - bv[:, :-1]) / grid.hy
    scale = max(float(np.sum(np.abs(rhs))), 1e-300)
    compatibility = abs(float(np.sum(rhs))) / scale
    if compatibility > COMPATIBILITY_TOLERANCE:
        raise CompatibilityError(
            f"Neumann data for zeta are not compatible | residual={compatibility:.2e}",
            details={"residual": compatibility},
        )
    zeta = PoissonSolver((grid.nx, grid.ny), grid.hx, grid.hy, poisson_tol).solve(rhs, "zeta")

    result = TechnicalProfiles(
        epsilon=epsilon, z=z, beta_tangential=beta_t, beta_normal=beta_n, psi=psi,
        beta_field=(cx, cy), zeta=zeta, compatibility=compatibility,
    )
    result.report = profile_report(result, profiles, grid)
    logger.debug(f"Technical profiles | eps={epsilon:g} | " + " | ".join(f"{k}={v:.3e}" for k, v in result.report.items()))
    return result


def profile_report(result: TechnicalProfiles, profiles: Dict[Side, LayerProfile], grid: Grid2D) -> Dict[str, float]:
    """Norms of the technical profiles over their epsilon-scaled bounds in terms of rho"""
    eps = result.epsilon
    area = grid.cell_area
    rho_h1 = np.sqrt(sum(p.norm(1, 0.0) ** 2 for p in profiles.values()))
    rho_h2 = np.sqrt(sum(p.norm(2, 2.0) ** 2 for p in profiles.values()))
    psi_h1 = np.sqrt(sum(layer_norm(result.psi[s], p.s, p.z, 1, 0.0) ** 2 for s, p in profiles.items()))

    cx, cy = result.beta_field
    beta_l2 = np.sqrt(area * np.sum(cx ** 2 + cy ** 2))
    grads = [cell_gradient(c, grid) for c in (cx, cy)]
    grad_l2 = np.sqrt(area * sum(np.sum(gx ** 2 + gy ** 2) for gx, gy in grads))
    second = 0.0
    for gx, gy in grads:
        lap = np.gradient(gx, grid.hx, axis=0) + np.gradient(gy, grid.hy, axis=1)
        second += np.sum(lap ** 2)
    lap_l2 = np.sqrt(area * second)
    zu, zv = face_gradient(result.zeta, grid)
    zeta_l2 = np.sqrt(area * (np.sum(zu ** 2) + np.sum(zv ** 2)))

    def ratio(value: float, bound: float) -> float:
        return float(value / bound) if bound > 0 else 0.0

    return {
        "beta": ratio(beta_l2, eps ** 0.25 * rho_h1),
        "grad_beta": ratio(grad_l2, eps ** -0.25 * rho_h1),
        "lap_beta": ratio(lap_l2, eps ** -0.75 * rho_h1),
        "grad_zeta": ratio(zeta_l2, eps ** 0.25 * rho_h1),
        "psi": ratio(psi_h1, rho_h2),
    }
