"""
Layer profiles evaluated in the box at z = phi(x) / sqrt(eps)
"""
import logging
from typing import Dict, Mapping, Optional, Tuple

import numpy as np
from scipy.interpolate import RegularGridInterpolator, interp1d

from ..base import Side, check_positive
from ..geometry.grid import Grid2D


logger = logging.getLogger(__name__)

MacPair = Tuple[np.ndarray, np.ndarray]
SideValues = Mapping[Side, np.ndarray]


class LayerSampler:
    """{f}(x) = f(s(x), phi(x) / sqrt(eps)) for profiles given per side on (s, z)

    phi is the distance to the side. Points deeper than z_max get the decay
    tail value 0 and are counted in ``truncated``; the tangential
    coordinate is clamped to the sampled wall range.
    """

    def __init__(self, grid: Grid2D, epsilon: float, z: np.ndarray, s: Mapping[Side, np.ndarray]):
        self.grid = grid
        self.epsilon = check_positive("epsilon", epsilon)
        self.z = np.asarray(z, dtype=float)
        self.s = {side: np.asarray(values, dtype=float) for side, values in s.items()}
        self.truncated = 0
        self._points: Dict[Tuple[Side, str], Tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
        root = np.sqrt(self.epsilon)
        for side, coordinate in self.s.items():
            for location in ("u", "v", "cell"):
                x, y = grid.coordinates(location)
                along = np.clip(grid.along(side, x, y), coordinate[0], coordinate[-1])
                depth = grid.distance(side, x, y) / root
                self._points[(side, location)] = (along, np.minimum(depth, self.z[-1]), depth > self.z[-1])

    def depth(self, side: Side, location: str) -> np.ndarray:
        """z = phi / sqrt(eps) at the sample points, capped at z_max"""
        return self._points[(side, location)][1]

    def scalar(self, side: Side, values: np.ndarray, location: str) -> np.ndarray:
        along, depth, beyond = self._points[(side, location)]
        s = self.s[side]
        values = np.asarray(values, dtype=float)
        if len(s) == 1:
            out = interp1d(self.z, values[0], bounds_error=False, fill_value=0.0, assume_sorted=True)(depth)
        else:
            interpolant = RegularGridInterpolator((s, self.z), values, bounds_error=False, fill_value=0.0)
            out = interpolant(np.stack([along.ravel(), depth.ravel()], axis=1)).reshape(along.shape)
        if np.any(values[..., -1] != 0.0):
            self.truncated += int(np.count_nonzero(beyond))
        return np.where(beyond, 0.0, out)

    def vector(self, tangential: Optional[SideValues] = None, normal: Optional[SideValues] = None) -> MacPair:
        """MAC components of sum over sides of {a} tau + {b} nu"""
        grid = self.grid
        out = [np.zeros(grid.shape("u")), np.zeros(grid.shape("v"))]
        for c, location in enumerate(("u", "v")):
            for parts, attribute in ((tangential, "tangent"), (normal, "normal")):
                for side, values in (parts or {}).items():
                    direction = getattr(side, attribute)[c]
                    if direction != 0.0:
                        out[c] += direction * self.scalar(side, values, location)
        return out[0], out[1]

    def cells(self, tangential: Optional[SideValues] = None, normal: Optional[SideValues] = None) -> MacPair:
        """Cell-centered components of the same sum"""
        grid = self.grid
        cx = np.zeros(grid.shape("cell"))
        cy = np.zeros(grid.shape("cell"))
        for parts, attribute in ((tangential, "tangent"), (normal, "normal")):
            for side, values in (parts or {}).items():
                direction = getattr(side, attribute)
                sampled = self.scalar(side, values, "cell")
                cx += direction[0] * sampled
                cy += direction[1] * sampled
        return cx, cy


def s_derivative(values: np.ndarray, s: np.ndarray, order: int = 1) -> np.ndarray:
    """d^order/ds^order of side profiles (n_side, nz)"""
    out = np.asarray(values, dtype=float)
    if len(s) < 3:
        return np.zeros_like(out)
    for _ in range(order):
        out = np.gradient(out, s, axis=0, edge_order=2)
    return out


def z_derivative(values: np.ndarray, z: np.ndarray, order: int = 1) -> np.ndarray:
    out = np.asarray(values, dtype=float)
    for _ in range(order):
        out = np.gradient(out, z, axis=-1, edge_order=2)
    return out


def face_components(u: np.ndarray, v: np.ndarray, location: str) -> MacPair:
    """Both components of a MAC field sampled at the u or v faces (edge values copied)"""
    cx = 0.5 * (u[1:, :] + u[:-1, :])
    cy = 0.5 * (v[:, 1:] + v[:, :-1])
    if location == "u":
        padded = np.pad(cy, ((1, 1), (0, 0)), mode="edge")
        return u, 0.5 * (padded[1:] + padded[:-1])
    padded = np.pad(cx, ((0, 0), (1, 1)), mode="edge")
    return 0.5 * (padded[:, 1:] + padded[:, :-1]), v


def directional_derivative(r: MacPair, w: MacPair, grid: Grid2D) -> MacPair:
    """(r . grad) w on the MAC faces"""
    out = []
    for c, location in enumerate(("u", "v")):
        rx, ry = face_components(r[0], r[1], location)
        wc = w[c]
        out.append(
            rx * np.gradient(wc, grid.hx, axis=0, edge_order=2)
            + ry * np.gradient(wc, grid.hy, axis=1, edge_order=2)
        )
    return out[0], out[1]
