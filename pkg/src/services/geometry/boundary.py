"""
Boundary coefficients, wall traces and the Navier/Robin boundary operators
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Union

import numpy as np

from ..base import FieldKind, Side
from ..exceptions import GhostDataError, GridMismatchError, ValidationError
from .fields import Field
from .grid import Grid2D


logger = logging.getLogger(__name__)

# quadratic extrapolation from cell centers at distances h/2, 3h/2, 5h/2
TRACE_WEIGHTS = np.array([15.0, -10.0, 3.0]) / 8.0
NORMAL_WEIGHTS = np.array([2.0, -3.0, 1.0])


@dataclass
class BoundaryCoefficients:
    """Friction matrix M (per wall sample) and heat transfer m on each side"""
    grid: Grid2D
    friction: Dict[Side, np.ndarray]
    heat: Dict[Side, np.ndarray]

    def __post_init__(self):
        for side in Side:
            n = self.grid.side_length(side)
            mm = np.asarray(self.friction[side], dtype=float)
            hh = np.asarray(self.heat[side], dtype=float)
            if mm.shape != (n, 2, 2) or hh.shape != (n,):
                raise GridMismatchError(
                    f"Boundary coefficients on {side.value} have shapes {mm.shape}, {hh.shape}; expected ({n},2,2), ({n},)"
                )
            if not np.allclose(mm, np.transpose(mm, (0, 2, 1))):
                raise ValidationError(f"Friction matrix on {side.value} is not symmetric")
            self.friction[side] = mm
            self.heat[side] = hh

    @classmethod
    def uniform(cls, grid: Grid2D, friction: Union[float, np.ndarray] = 0.0, heat: float = 0.0) -> "BoundaryCoefficients":
        mat = np.asarray(friction, dtype=float)
        if mat.ndim == 0:
            mat = mat * np.eye(2)
        fr = {s: np.broadcast_to(mat, (grid.side_length(s), 2, 2)).copy() for s in Side}
        ht = {s: np.full(grid.side_length(s), float(heat)) for s in Side}
        return cls(grid, fr, ht)

    def tangential_friction(self, side: Side) -> np.ndarray:
        """tau^T M tau at the wall samples"""
        t = side.tangent
        return np.einsum("i,nij,j->n", t, self.friction[side], t)

    def scaled(self, friction_factor: float = 1.0, heat_factor: float = 1.0) -> "BoundaryCoefficients":
        return BoundaryCoefficients(
            self.grid,
            {s: friction_factor * m for s, m in self.friction.items()},
            {s: heat_factor * h for s, h in self.heat.items()},
        )

    def plus(self, friction: Dict[Side, np.ndarray] = None, heat: Dict[Side, np.ndarray] = None) -> "BoundaryCoefficients":
        """Coefficients with per-side increments added (A = M + F, B = m + G)"""
        fr = {s: self.friction[s] + (friction[s] if friction and s in friction else 0.0) for s in Side}
        ht = {s: self.heat[s] + (heat[s] if heat and s in heat else 0.0) for s in Side}
        return BoundaryCoefficients(self.grid, fr, ht)

    def tangential_friction_matrix(self, side: Side) -> np.ndarray:
        t = side.tangent
        return np.einsum("n,i,j->nij", self.tangential_friction(side), t, t)


def _require_depth(grid: Grid2D) -> None:
    if min(grid.nx, grid.ny) < 3:
        raise GhostDataError("Wall stencils need three cells in the normal direction")


def wall_trace(values: np.ndarray, side: Side) -> np.ndarray:
    """Extrapolate a cell-centered array to the wall of a side"""
    c = _normal_stack(values, side)
    return np.tensordot(TRACE_WEIGHTS, c, axes=1)


def wall_normal_derivative(values: np.ndarray, side: Side, h: float) -> np.ndarray:
    """Outward normal derivative at the wall from the first three cells"""
    c = _normal_stack(values, side)
    return np.tensordot(NORMAL_WEIGHTS, c, axes=1) / h


def _normal_stack(values: np.ndarray, side: Side) -> np.ndarray:
    if values.shape[side.axis] < 3:
        raise GhostDataError(f"Need three cells next to the {side.value} wall, got {values.shape[side.axis]}")
    if side == Side.LEFT:
        return values[:3, :]
    if side == Side.RIGHT:
        return values[::-1, :][:3, :]
    if side == Side.BOTTOM:
        return values[:, :3].T
    return values[:, ::-1][:, :3].T


@dataclass
class SideTrace:
    """Wall data of one side"""
    side: Side
    value: np.ndarray
    normal_derivative: Optional[np.ndarray] = None
    deformation_normal: Optional[np.ndarray] = None
    operator: Optional[np.ndarray] = None


@dataclass
class BoundaryTraces:
    kind: FieldKind
    sides: Dict[Side, SideTrace] = field(default_factory=dict)

    def __getitem__(self, side: Side) -> SideTrace:
        return self.sides[side]

    def max_abs(self) -> float:
        return float(max(np.max(np.abs(t.operator)) for t in self.sides.values()))


def _tangential(vectors: np.ndarray, side: Side) -> np.ndarray:
    t = side.tangent
    return np.outer(vectors @ t, t)


def velocity_gradient_cells(u: Field):
    """Cell-centered velocity components and their gradient tensor"""
    grid = u.grid
    cx, cy = u.cell_vectors()
    grad = np.empty((grid.nx, grid.ny, 2, 2))
    grad[..., 0, 0] = np.gradient(cx, grid.hx, axis=0, edge_order=2)
    grad[..., 0, 1] = np.gradient(cx, grid.hy, axis=1, edge_order=2)
    grad[..., 1, 0] = np.gradient(cy, grid.hx, axis=0, edge_order=2)
    grad[..., 1, 1] = np.gradient(cy, grid.hy, axis=1, edge_order=2)
    return cx, cy, grad


def navier_traces(u: Field, coeffs: BoundaryCoefficients) -> BoundaryTraces:
    """N(u) = [D(u) nu + M u]_tan on every side"""
    grid = u.grid
    _require_depth(grid)
    cx, cy, grad = velocity_gradient_cells(u)
    deformation = 0.5 * (grad + np.swapaxes(grad, -1, -2))
    traces = BoundaryTraces(FieldKind.VECTOR)
    for side in Side:
        nu = side.normal
        wall_u = np.stack([wall_trace(cx, side), wall_trace(cy, side)], axis=1)
        wall_d = np.stack(
            [np.stack([wall_trace(deformation[..., a, b], side) for b in range(2)], axis=-1) for a in range(2)],
            axis=1,
        )
        d_nu = np.einsum("nij,j->ni", wall_d, nu)
        m_u = np.einsum("nij,nj->ni", coeffs.friction[side], wall_u)
        traces.sides[side] = SideTrace(
            side=side,
            value=wall_u,
            deformation_normal=_tangential(d_nu, side),
            operator=_tangential(d_nu + m_u, side),
        )
    return traces


def robin_traces(theta: Field, coeffs: BoundaryCoefficients) -> BoundaryTraces:
    """R(theta) = d theta/d nu + m theta on every side"""
    grid = theta.grid
    _require_depth(grid)
    traces = BoundaryTraces(FieldKind.SCALAR)
    for side in Side:
        h = grid.hx if side.axis == 0 else grid.hy
        value = wall_trace(theta.values, side)
        dn = wall_normal_derivative(theta.values, side, h)
        traces.sides[side] = SideTrace(side=side, value=value, normal_derivative=dn, operator=dn + coeffs.heat[side] * value)
    return traces


def boundary_operators(field_: Field, coeffs: BoundaryCoefficients) -> BoundaryTraces:
    """Navier operator of a velocity field or Robin operator of a temperature field"""
    if not field_.grid.same_as(coeffs.grid):
        raise GridMismatchError("Field and boundary coefficients live on different grids")
    if field_.kind == FieldKind.VECTOR:
        return navier_traces(field_, coeffs)
    return robin_traces(field_, coeffs)


def normal_flux(u: Field) -> Dict[Side, np.ndarray]:
    """u . nu on the wall faces"""
    return {
        Side.LEFT: -u.u[0, :],
        Side.RIGHT: u.u[-1, :],
        Side.BOTTOM: -u.v[:, 0],
        Side.TOP: u.v[:, -1],
    }


def wall_integral(values: Dict[Side, np.ndarray], grid: Grid2D) -> float:
    """Boundary integral of per-side wall samples"""
    total = 0.0
    for side, vals in values.items():
        ds = grid.hy if side.axis == 0 else grid.hx
        total += float(np.sum(vals) * ds)
    return total


@dataclass
class BoundaryNonlinearity:
    """Nonlinear boundary laws N(u) + [f(u)]_tan = 0 and R(theta) + g(theta) = 0

    f maps wall velocities (n, 2) to (n, 2), jacobian to (n, 2, 2); g and
    g_prime act elementwise on wall temperatures.
    """
    f: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    g: Callable[[np.ndarray], np.ndarray]
    g_prime: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"

    @classmethod
    def none(cls) -> "BoundaryNonlinearity":
        return cls.linear(0.0, 0.0)

    @classmethod
    def linear(cls, friction: float, heat: float) -> "BoundaryNonlinearity":
        mat = friction * np.eye(2)
        return cls(
            f=lambda u: u @ mat.T,
            jacobian=lambda u: np.broadcast_to(mat, u.shape[:-1] + (2, 2)).copy(),
            g=lambda t: heat * t,
            g_prime=lambda t: np.full_like(t, heat),
            name="linear" if friction or heat else "none",
        )

    @classmethod
    def cubic(cls, strength: float = 1.0) -> "BoundaryNonlinearity":
        """f(u) = c|u|^2 u and g(theta) = c theta^3"""
        def f(u):
            return strength * np.sum(u ** 2, axis=-1, keepdims=True) * u

        def jac(u):
            eye = np.eye(2)
            sq = np.sum(u ** 2, axis=-1)[..., None, None]
            return strength * (sq * eye + 2.0 * u[..., :, None] * u[..., None, :])

        return cls(
            f=f,
            jacobian=jac,
            g=lambda t: strength * t ** 3,
            g_prime=lambda t: 3.0 * strength * t ** 2,
            name="cubic",
        )

    def is_zero(self) -> bool:
        return self.name == "none"

    def boundary_data(self, u: Field, theta: Field):
        """Explicit Navier/Robin data (-[f(u)]_tan . tau, -g(theta)) from current wall traces"""
        cx, cy = u.cell_vectors()
        navier, robin = {}, {}
        for side in Side:
            wall_u = np.stack([wall_trace(cx, side), wall_trace(cy, side)], axis=1)
            navier[side] = -(self.f(wall_u) @ side.tangent)
            robin[side] = -self.g(wall_trace(theta.values, side))
        return navier, robin

    def linearized_increments(self, u_wall: Dict[Side, np.ndarray], theta_wall: Dict[Side, np.ndarray],
                              u_base: Optional[Dict[Side, np.ndarray]] = None,
                              theta_base: Optional[Dict[Side, np.ndarray]] = None):
        """F = int_0^1 Df(u_base + s u) ds and G = int_0^1 g'(theta_base + s theta) ds per side (Gauss-Legendre)"""
        nodes, weights = np.polynomial.legendre.leggauss(6)
        s = 0.5 * (nodes + 1.0)
        w = 0.5 * weights
        friction, heat = {}, {}
        for side in Side:
            uw = u_wall[side]
            tw = theta_wall[side]
            ub = 0.0 if u_base is None else u_base[side]
            tb = 0.0 if theta_base is None else theta_base[side]
            friction[side] = sum(wk * self.jacobian(ub + sk * uw) for sk, wk in zip(s, w))
            friction[side] = 0.5 * (friction[side] + np.swapaxes(friction[side], -1, -2))
            heat[side] = sum(wk * self.g_prime(tb + sk * tw) for sk, wk in zip(s, w))
        return friction, heat
