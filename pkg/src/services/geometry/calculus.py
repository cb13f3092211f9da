"""
Discrete differential operators and sampling on the MAC grid
"""
from typing import Dict, Tuple

import numpy as np
from scipy import fft
from scipy.ndimage import map_coordinates

from ..base import FieldKind
from ..exceptions import ValidationError
from .fields import Field
from .grid import Grid2D


def face_gradient(p: np.ndarray, grid: Grid2D) -> Tuple[np.ndarray, np.ndarray]:
    """Gradient of a cell field on faces; boundary faces are zero (Neumann)"""
    gu = np.zeros(grid.shape("u"))
    gv = np.zeros(grid.shape("v"))
    gu[1:-1, :] = (p[1:, :] - p[:-1, :]) / grid.hx
    gv[:, 1:-1] = (p[:, 1:] - p[:, :-1]) / grid.hy
    return gu, gv


def divergence(u: np.ndarray, v: np.ndarray, grid: Grid2D) -> np.ndarray:
    return (u[1:, :] - u[:-1, :]) / grid.hx + (v[:, 1:] - v[:, :-1]) / grid.hy


def laplacian(p: np.ndarray, grid: Grid2D) -> np.ndarray:
    """Neumann five-point Laplacian of a cell field (div of face gradient)"""
    return divergence(*face_gradient(p, grid), grid)


def cell_gradient(p: np.ndarray, grid: Grid2D) -> Tuple[np.ndarray, np.ndarray]:
    """Second-order gradient at cell centers with one-sided edges"""
    gx = np.gradient(p, grid.hx, axis=0, edge_order=2)
    gy = np.gradient(p, grid.hy, axis=1, edge_order=2)
    return gx, gy


def node_curl(u: np.ndarray, v: np.ndarray, grid: Grid2D) -> np.ndarray:
    """Vorticity dv/dx - du/dy on interior nodes; boundary nodes are zero"""
    w = np.zeros(grid.shape("node"))
    w[1:-1, 1:-1] = (
        (v[1:, 1:-1] - v[:-1, 1:-1]) / grid.hx
        - (u[1:-1, 1:] - u[1:-1, :-1]) / grid.hy
    )
    return w


def stream_velocity(psi: np.ndarray, grid: Grid2D) -> Tuple[np.ndarray, np.ndarray]:
    """MAC velocity (d psi/dy, -d psi/dx) of a node stream function"""
    u = (psi[:, 1:] - psi[:, :-1]) / grid.hy
    v = -(psi[1:, :] - psi[:-1, :]) / grid.hx
    return u, v


def _dirichlet_symbols(grid: Grid2D) -> np.ndarray:
    kx = np.arange(1, grid.nx)
    ky = np.arange(1, grid.ny)
    lx = (2.0 - 2.0 * np.cos(np.pi * kx / grid.nx)) / grid.hx ** 2
    ly = (2.0 - 2.0 * np.cos(np.pi * ky / grid.ny)) / grid.hy ** 2
    return lx[:, None] + ly[None, :]


def solve_stream(vorticity: np.ndarray, grid: Grid2D) -> np.ndarray:
    """Solve -Lap psi = vorticity on interior nodes with psi = 0 on the boundary"""
    rhs = vorticity[1:-1, 1:-1]
    coeffs = fft.dstn(rhs, type=1, norm="ortho") / _dirichlet_symbols(grid)
    psi = np.zeros(grid.shape("node"))
    psi[1:-1, 1:-1] = fft.idstn(coeffs, type=1, norm="ortho")
    return psi


def velocity_from_vorticity(vorticity: np.ndarray, grid: Grid2D) -> Tuple[np.ndarray, np.ndarray]:
    return stream_velocity(solve_stream(vorticity, grid), grid)


def discrete_calculus(field: Field) -> Dict[str, np.ndarray]:
    """grad/div/curl/lap of a field in the MAC layout"""
    grid = field.grid
    if field.kind == FieldKind.SCALAR:
        gu, gv = face_gradient(field.values, grid)
        return {"grad_u": gu, "grad_v": gv, "lap": laplacian(field.values, grid)}
    return {
        "div": divergence(field.u, field.v, grid),
        "curl": node_curl(field.u, field.v, grid),
    }


def index_coordinates(grid: Grid2D, location: str, points: np.ndarray) -> np.ndarray:
    """Fractional array indices of physical points for a grid location"""
    x = points[:, 0] / grid.hx
    y = points[:, 1] / grid.hy
    if location in ("cell", "v"):
        x = x - 0.5
    if location in ("cell", "u"):
        y = y - 0.5
    return np.vstack([x, y])


def sample(values: np.ndarray, grid: Grid2D, location: str, points: np.ndarray, order: int = 1) -> np.ndarray:
    """Interpolate a staggered array at arbitrary points (clamped at the walls)"""
    if values.shape != grid.shape(location):
        raise ValidationError(f"Array {values.shape} does not match {location} layout {grid.shape(location)}")
    coords = index_coordinates(grid, location, np.atleast_2d(points))
    return map_coordinates(values, coords, order=order, mode="nearest")


def sample_velocity(u: np.ndarray, v: np.ndarray, grid: Grid2D, points: np.ndarray) -> np.ndarray:
    return np.stack([sample(u, grid, "u", points), sample(v, grid, "v", points)], axis=1)


def faces_to_cells(u: np.ndarray, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    return 0.5 * (u[1:, :] + u[:-1, :]), 0.5 * (v[:, 1:] + v[:, :-1])


def cells_to_faces(cx: np.ndarray, cy: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Average cell vectors to faces; wall faces copy the adjacent cell"""
    nx, ny = cx.shape
    u = np.empty((nx + 1, ny))
    v = np.empty((nx, ny + 1))
    u[1:-1] = 0.5 * (cx[1:] + cx[:-1])
    u[0], u[-1] = cx[0], cx[-1]
    v[:, 1:-1] = 0.5 * (cy[:, 1:] + cy[:, :-1])
    v[:, 0], v[:, -1] = cy[:, 0], cy[:, -1]
    return u, v
