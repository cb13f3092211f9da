"""
Boundary-layer profiles and their coefficients on the wall samples of a side
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np

from ..base import Side
from ..exceptions import GhostDataError, ValidationError
from ..flushing.partition import cutoff
from ..geometry.boundary import BoundaryCoefficients, navier_traces
from ..geometry.fields import Field
from ..geometry.grid import Grid2D
from ..geometry.norms import weighted_z_norm


logger = logging.getLogger(__name__)


def z_volumes(z: np.ndarray) -> np.ndarray:
    """Finite-volume widths of the z nodes (also the trapezoid weights)"""
    dz = np.diff(z)
    volumes = np.zeros_like(z)
    volumes[:-1] += 0.5 * dz
    volumes[1:] += 0.5 * dz
    return volumes


def z_moments(values: np.ndarray, z: np.ndarray, count: int) -> np.ndarray:
    """int z^j r dz for j < count along the last axis; shape (..., count)"""
    weights = z_volumes(z)[None, :] * z[None, :] ** np.arange(count)[:, None]
    return np.tensordot(values, weights.T, axes=([-1], [0]))


def tail_integral(values: np.ndarray, z: np.ndarray) -> np.ndarray:
    """int_z^{z_max} values dz' along the last axis (trapezoid)"""
    cumulative = np.concatenate(
        [np.zeros(values.shape[:-1] + (1,)), np.cumsum(0.5 * (values[..., 1:] + values[..., :-1]) * np.diff(z), axis=-1)],
        axis=-1,
    )
    return cumulative[..., -1:] - cumulative


def layer_norm(values: np.ndarray, s: np.ndarray, z: np.ndarray, x_derivatives: int = 0, z_weight: float = 0.0) -> float:
    """||r||_{H^m_x(H^{0,k}_z)} with m x-derivatives along the side and weight (1 + z^2)^k"""
    ds = float(s[1] - s[0]) if len(s) > 1 else 1.0
    total = 0.0
    derivative = np.asarray(values, dtype=float)
    for order in range(x_derivatives + 1):
        if order > 0:
            if derivative.shape[0] < 3:
                raise GhostDataError("x-derivatives of a layer need three wall samples")
            derivative = np.gradient(derivative, ds, axis=0, edge_order=2)
        total += ds * float(np.sum(weighted_z_norm(derivative, z, 0, z_weight)))
    return float(np.sqrt(total))


def corner_taper(s: np.ndarray, length: float, width: float) -> np.ndarray:
    """Smooth chi(s): zero at both corners, one at distance >= width from them"""
    half = 0.5 * width
    rise = 1.0 - cutoff(s - half, half)
    fall = 1.0 - cutoff((length - s) - half, half)
    return np.asarray(rise * fall, dtype=float)


@dataclass
class LayerProfile:
    """Tangential profile rho(t, s, z) = r(s, z) tau on one side

    Only the tangential component is stored; the normal slot is zero, so
    rho . nu = 0 holds exactly.
    """
    side: Side
    s: np.ndarray
    z: np.ndarray
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.s), len(self.z)):
            raise ValidationError(
                f"Layer profile on {self.side.value} has shape {self.values.shape}, expected ({len(self.s)}, {len(self.z)})"
            )

    @classmethod
    def zeros(cls, side: Side, s: np.ndarray, z: np.ndarray, time: float = 0.0) -> "LayerProfile":
        return cls(side, s, z, np.zeros((len(s), len(z))), time)

    def vector(self) -> np.ndarray:
        """rho as (n_side, nz, 2) vectors"""
        return self.values[..., None] * self.side.tangent

    def normal_component(self) -> np.ndarray:
        return self.vector() @ self.side.normal

    def moments(self, count: int) -> np.ndarray:
        return z_moments(self.values, self.z, count)

    def norm(self, x_derivatives: int = 0, z_weight: float = 0.0) -> float:
        return layer_norm(self.values, self.s, self.z, x_derivatives, z_weight)

    def with_values(self, values: np.ndarray, time: Optional[float] = None) -> "LayerProfile":
        return replace(self, values=np.asarray(values, dtype=float), time=self.time if time is None else time)


@dataclass
class LayerCoefficients:
    """Wall data of u0 driving the layer equation on one side

    tangential: u0 . tau at the wall, slope: its derivative along the side,
    flat: u0_flat = -(u0 . nu)/phi at the wall, neumann: g0 = 2 chi N(u0),
    normal_slope: d(u0 . nu)/ds at the wall.
    """
    side: Side
    s: np.ndarray
    tangential: np.ndarray
    slope: np.ndarray
    flat: np.ndarray
    neumann: np.ndarray
    normal_slope: np.ndarray
    taper: np.ndarray = field(repr=False, default=None)

    def scaled(self, factor: float) -> "LayerCoefficients":
        return replace(
            self,
            tangential=factor * self.tangential,
            slope=factor * self.slope,
            flat=factor * self.flat,
            neumann=factor * self.neumann,
            normal_slope=factor * self.normal_slope,
        )

    def max_abs(self) -> float:
        return float(max(
            np.max(np.abs(self.tangential)), np.max(np.abs(self.slope)), np.max(np.abs(self.flat)),
            np.max(np.abs(self.neumann)), np.max(np.abs(self.normal_slope)),
        ))


def _interior_normal_faces(u0: Field, side: Side) -> Tuple[np.ndarray, np.ndarray]:
    """u0 . nu on the first two face rows inside the wall (distances h and 2h)"""
    if side == Side.LEFT:
        return -u0.u[1], -u0.u[2]
    if side == Side.RIGHT:
        return u0.u[-2], u0.u[-3]
    if side == Side.BOTTOM:
        return -u0.v[:, 1], -u0.v[:, 2]
    return u0.v[:, -2], u0.v[:, -3]


def layer_coefficients(u0: Field, coeffs: BoundaryCoefficients, side: Side,
                       taper_width: Optional[float] = None) -> LayerCoefficients:
    """(u0_flat, g0) and the tangential wall data of u0 on one side

    u0_flat is the one-sided limit of -(u0 . nu)/phi: with u0 . nu = 0 on
    the wall, -(4 f(h) - f(2h)) / (2h) is exact for linear f(phi).
    """
    grid: Grid2D = u0.grid
    h, ds = grid.side_spacing(side)
    s = grid.side_coordinate(side)
    length = grid.ly if side.axis == 0 else grid.lx
    taper_width = grid.collar_rows * ds if taper_width is None else taper_width

    traces = navier_traces(u0, coeffs)[side]
    tau, nu = side.tangent, side.normal
    tangential = traces.value @ tau
    wall_normal = traces.value @ nu
    f1, f2 = _interior_normal_faces(u0, side)
    flat = -(4.0 * f1 - f2) / (2.0 * h)
    chi = corner_taper(s, length, taper_width)
    return LayerCoefficients(
        side=side,
        s=s,
        tangential=tangential,
        slope=np.gradient(tangential, ds, edge_order=2),
        flat=flat,
        neumann=2.0 * chi * (traces.operator @ tau),
        normal_slope=np.gradient(wall_normal, ds, edge_order=2),
        taper=chi,
    )
