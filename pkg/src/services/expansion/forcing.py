"""
Forcing terms, amplification operators and boundary data of the remainder system
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from ..base import ExpansionMode, Side
from ..exceptions import ValidationError
from ..geometry.boundary import navier_traces, robin_traces
from ..geometry.calculus import cell_gradient, faces_to_cells
from ..geometry.fields import Field
from ..solver.operators import BoundaryData
from .assemble import ExpansionTerms, expansion_terms, tapered_beta
from .bundle import ExpansionBundle
from .trace import MacPair, directional_derivative, face_components, s_derivative, z_derivative


logger = logging.getLogger(__name__)

LOCATIONS = ("u", "v")


@dataclass
class RemainderForcing:
    """f^eps on the faces, h^eps on the cells and the data of N(r) = -N(g), R(q) = -R(theta1)"""
    t: float
    f: MacPair
    h: np.ndarray
    navier: Dict[Side, np.ndarray]
    robin: Dict[Side, np.ndarray]
    blocks: Dict[str, float] = field(default_factory=dict)

    def boundary_data(self) -> BoundaryData:
        return BoundaryData(dict(self.navier), dict(self.robin))

    def norms(self, area: float) -> Tuple[float, float]:
        """L2 norms of f and h"""
        f = np.sqrt(area * (np.sum(self.f[0] ** 2) + np.sum(self.f[1] ** 2)))
        return float(f), float(np.sqrt(area * np.sum(self.h ** 2)))


def face_laplacian(values: np.ndarray, hx: float, hy: float) -> np.ndarray:
    dxx = np.gradient(np.gradient(values, hx, axis=0, edge_order=2), hx, axis=0, edge_order=2)
    dyy = np.gradient(np.gradient(values, hy, axis=1, edge_order=2), hy, axis=1, edge_order=2)
    return dxx + dyy


def cells_to_v(values: np.ndarray) -> np.ndarray:
    padded = np.pad(values, ((0, 0), (1, 1)), mode="edge")
    return 0.5 * (padded[:, 1:] + padded[:, :-1])


def _projections(vector: MacPair, side: Side, location: str) -> Tuple[np.ndarray, np.ndarray]:
    """(a . tau, a . nu) of a MAC field at one face location"""
    ax, ay = face_components(vector[0], vector[1], location)
    tau, nu = side.tangent, side.normal
    return ax * tau[0] + ay * tau[1], ax * nu[0] + ay * nu[1]


def _add(target: Dict[str, list], name: str, c: int, values) -> None:
    target[name][c] = target[name][c] + values


def amplify(bundle: ExpansionBundle, t: float, r: Field, route: str = "literal") -> MacPair:
    """A^eps r

    route="literal" evaluates (r.grad)(u0 + eps(u1 + grad zeta)) on the grid
    plus the layer parts sqrt(eps)(r.tau){d_s rho} - (r.nu){d_z rho} and
    eps(r.tau){d_s beta} - sqrt(eps)(r.nu){d_z beta} from the z-grid.
    route="grid" differentiates the assembled field instead.
    """
    terms = expansion_terms(bundle, t)
    r_pair = (np.asarray(r.u), np.asarray(r.v))
    if route == "grid":
        return directional_derivative(r_pair, terms.velocity(), bundle.grid)
    if route != "literal":
        raise ValidationError(f"Unknown amplification route {route!r}")

    eps, root = bundle.epsilon, bundle.root
    smooth = tuple(terms.u0[c] + eps * (terms.first[c] + terms.grad_zeta[c]) for c in range(2))
    out = list(directional_derivative(r_pair, smooth, bundle.grid))
    if not bundle.has_layers:
        return out[0], out[1]

    sampler = bundle.sampler()
    z = bundle.z
    rho = bundle.rho(t)
    beta_t, beta_n = tapered_beta(bundle, t)
    for side in Side:
        s = bundle.s(side)
        ds_rho, dz_rho = s_derivative(rho[side], s), z_derivative(rho[side], z)
        ds_bt, dz_bt = s_derivative(beta_t[side], s), z_derivative(beta_t[side], z)
        ds_bn, dz_bn = s_derivative(beta_n[side], s), z_derivative(beta_n[side], z)
        for c, location in enumerate(LOCATIONS):
            tau_c, nu_c = side.tangent[c], side.normal[c]
            if tau_c == 0.0 and nu_c == 0.0:
                continue
            r_tan, r_nrm = _projections(r_pair, side, location)

            def at(values):
                return sampler.scalar(side, values, location)

            if tau_c:
                out[c] += tau_c * (
                    root * r_tan * at(ds_rho) - r_nrm * at(dz_rho)
                    + eps * r_tan * at(ds_bt) - root * r_nrm * at(dz_bt)
                )
            if nu_c:
                out[c] += nu_c * (eps * r_tan * at(ds_bn) - root * r_nrm * at(dz_bn))
    return out[0], out[1]


def amplify_temperature(bundle: ExpansionBundle, t: float, r: Field) -> np.ndarray:
    """B^eps r = eps r . grad theta1"""
    _, _, theta1 = bundle.first_order(t)
    gx, gy = cell_gradient(theta1, bundle.grid)
    cx, cy = r.cell_vectors()
    return bundle.epsilon * (cx * gx + cy * gy)


def _side_blocks(bundle: ExpansionBundle, t: float, terms: ExpansionTerms, blocks: Dict[str, list]) -> None:
    """Layer contributions to eps f that are evaluated on the z-grid"""
    eps, root = bundle.epsilon, bundle.root
    sampler = bundle.sampler()
    z = bundle.z
    rho = bundle.rho(t)
    coefficients = bundle.layer_coefficients(t)
    technical = bundle.technical(t)
    beta_t, beta_n = tapered_beta(bundle, t)
    rate_t, rate_n = bundle.beta_rate(t)
    correction = terms.correction()
    for side in Side:
        s = bundle.s(side)
        coef = coefficients[side]
        chi = coef.taper[:, None]
        r = rho[side]
        ds_r, dss_r, dz_r = s_derivative(r, s), s_derivative(r, s, 2), z_derivative(r, z)
        parts = {"t": beta_t[side], "n": beta_n[side]}
        rates = {"t": chi * rate_t[side], "n": chi * rate_n[side]}
        for c, location in enumerate(LOCATIONS):
            tau_c, nu_c = side.tangent[c], side.normal[c]
            if tau_c == 0.0 and nu_c == 0.0:
                continue
            u0_tan, u0_nrm = _projections(terms.u0, side, location)
            w_tan, w_nrm = _projections(correction, side, location)

            def at(values):
                return sampler.scalar(side, values, location)

            if tau_c:
                stretch = coef.flat[:, None] * z[None, :] * dz_r
                _add(blocks, "layer_transport", c, tau_c * (
                    -u0_nrm * at(dz_r) - root * at(stretch)
                    + root * (u0_tan * at(ds_r) - at(coef.tangential[:, None] * ds_r))
                    - root * at(coef.slope[:, None] * r)
                ))
                _add(blocks, "viscous", c, -tau_c * eps * root * at(dss_r))
                _add(blocks, "pressure", c, tau_c * eps * at(s_derivative(technical.psi[side], s)))
                _add(blocks, "convective", c, tau_c * (
                    eps * at(r * ds_r) + eps * root * w_tan * at(ds_r) - eps * w_nrm * at(dz_r)
                ))
            if nu_c:
                _add(blocks, "layer_transport", c, -nu_c * root * at(coef.normal_slope[:, None] * r))
            for key, direction in (("t", tau_c), ("n", nu_c)):
                if direction == 0.0:
                    continue
                b = parts[key]
                _add(blocks, "beta", c, direction * (
                    eps * (at(rates[key]) + u0_tan * at(s_derivative(b, s)) - at(z_derivative(b, z, 2)))
                    - root * u0_nrm * at(z_derivative(b, z))
                ))
                _add(blocks, "viscous", c, -direction * eps ** 2 * at(s_derivative(b, s, 2)))


def remainder_forcing(bundle: ExpansionBundle, t: float) -> RemainderForcing:
    """f^eps, h^eps and the remainder boundary data at time t

    eps f collects what the profile equations leave over once u0, rho and
    u1 (or u_bar) have absorbed their own orders. Pure gradients are
    dropped since they only shift the remainder pressure.
    """
    grid = bundle.grid
    eps, root = bundle.epsilon, bundle.root
    terms = expansion_terms(bundle, t)
    zero = (np.zeros(grid.shape("u")), np.zeros(grid.shape("v")))
    names = ("layer_transport", "viscous", "pressure", "beta", "convective", "buoyancy")
    blocks = {name: [zero[0].copy(), zero[1].copy()] for name in names}

    correction = terms.correction()
    if bundle.has_layers:
        _side_blocks(bundle, t, terms, blocks)
        rho, beta = terms.rho, terms.beta
        for c, value in enumerate(directional_derivative(rho, terms.u0, grid)):
            _add(blocks, "layer_transport", c, root * value)
        for c, value in enumerate(directional_derivative(beta, terms.u0, grid)):
            _add(blocks, "beta", c, eps * value)
        for c, value in enumerate(directional_derivative(rho, correction, grid)):
            _add(blocks, "convective", c, eps * root * value)

    for c, value in enumerate(directional_derivative(correction, correction, grid)):
        _add(blocks, "convective", c, eps ** 2 * value)
    if bundle.mode == ExpansionMode.TRACKING_2:
        for c, value in enumerate(directional_derivative(terms.first, terms.first, grid)):
            _add(blocks, "convective", c, -eps ** 2 * value)
    else:
        for c in range(2):
            _add(blocks, "viscous", c, -eps ** 2 * face_laplacian(terms.first[c], grid.hx, grid.hy))
        _add(blocks, "buoyancy", 1, -eps ** 2 * cells_to_v(terms.theta1))

    f = tuple(-sum(blocks[name][c] for name in names) / eps for c in range(2))
    report = {name: float(max(np.max(np.abs(a)) for a in blocks[name])) / eps for name in names}

    h = _temperature_forcing(bundle, terms)
    navier, robin = remainder_boundary_data(bundle, t, terms)
    return RemainderForcing(t=t, f=f, h=h, navier=navier, robin=robin, blocks=report)


def _temperature_forcing(bundle: ExpansionBundle, terms: ExpansionTerms) -> np.ndarray:
    """h = eps Lap theta1 - (sqrt(eps) rho + eps (u1 + grad zeta + beta)) . grad theta1"""
    grid = bundle.grid
    eps, root = bundle.epsilon, bundle.root
    theta1 = terms.theta1
    gx, gy = cell_gradient(theta1, grid)
    if bundle.mode == ExpansionMode.TRACKING_2:
        carrier = tuple(terms.grad_zeta[c] + terms.beta[c] for c in range(2))
        laplacian = 0.0
    else:
        carrier = terms.correction()
        laplacian = face_laplacian(theta1, grid.hx, grid.hy)
    cx, cy = faces_to_cells(*carrier)
    rx, ry = faces_to_cells(*terms.rho)
    return eps * laplacian - (root * rx + eps * cx) * gx - (root * ry + eps * cy) * gy


def remainder_boundary_data(bundle: ExpansionBundle, t: float,
                            terms: ExpansionTerms = None) -> Tuple[Dict[Side, np.ndarray], Dict[Side, np.ndarray]]:
    """-N(g) with g = u1 + grad zeta + beta|_{z=0}, and -R(theta1)"""
    grid = bundle.grid
    coeffs = bundle.coeffs
    terms = terms or expansion_terms(bundle, t)
    smooth = tuple(terms.first[c] + terms.grad_zeta[c] for c in range(2))
    traces = navier_traces(Field.vector(grid, *smooth), coeffs)
    heat = robin_traces(Field.scalar(grid, terms.theta1), coeffs)
    navier, robin = {}, {}
    if bundle.has_layers:
        beta_t, beta_n = tapered_beta(bundle, t)
    for side in Side:
        value = traces[side].operator @ side.tangent
        if bundle.has_layers:
            s = bundle.s(side)
            wall_t, wall_n = beta_t[side][:, 0], beta_n[side][:, 0]
            wall = wall_t[:, None] * side.tangent + wall_n[:, None] * side.normal
            friction = np.einsum("i,nij,nj->n", side.tangent, coeffs.friction[side], wall)
            value = value + 0.5 * s_derivative(wall_n[:, None], s)[:, 0] + friction
        navier[side] = -value
        robin[side] = -heat[side].operator
    return navier, robin
