"""
Uniform MAC grid on the extended box with physical domain, strip and control region
"""
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, List, Tuple

import numpy as np

from ..base import Side
from ..config import GridConfig
from ..exceptions import GhostDataError, ValidationError


logger = logging.getLogger(__name__)

LOCATIONS = ("cell", "u", "v", "node")


@dataclass(frozen=True)
class Box:
    """Axis-aligned closed rectangle"""
    x0: float
    x1: float
    y0: float
    y1: float

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ValidationError(f"Degenerate box {self}")

    @property
    def center(self) -> np.ndarray:
        return np.array([(self.x0 + self.x1) / 2, (self.y0 + self.y1) / 2])

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    def contains(self, x: np.ndarray, y: np.ndarray, margin: float = 0.0) -> np.ndarray:
        return (
            (x >= self.x0 + margin) & (x <= self.x1 - margin)
            & (y >= self.y0 + margin) & (y <= self.y1 - margin)
        )

    def shrink(self, fraction: float) -> "Box":
        """Box with the same center and sides scaled by (1 - fraction)"""
        cx, cy = self.center
        hw = 0.5 * self.width * (1.0 - fraction)
        hh = 0.5 * self.height * (1.0 - fraction)
        return Box(cx - hw, cx + hw, cy - hh, cy + hh)

    def inside(self, other: "Box", strict: bool = False) -> bool:
        if strict:
            return self.x0 > other.x0 and self.x1 < other.x1 and self.y0 > other.y0 and self.y1 < other.y1
        return self.x0 >= other.x0 and self.x1 <= other.x1 and self.y0 >= other.y0 and self.y1 <= other.y1


@dataclass(frozen=True)
class BoundaryFace:
    """One wall segment of the outer box, centered at a cell edge"""
    side: Side
    index: int
    x: float
    y: float
    normal: Tuple[float, float]
    tangent: Tuple[float, float]


@dataclass(frozen=True)
class Grid2D:
    """Staggered grid on O = [0, lx] x [0, ly]

    The physical domain is the first ``nx_omega`` columns; the interface
    Gamma_c sits at x = nx_omega * hx. Velocity components live on faces
    (u: (nx+1, ny), v: (nx, ny+1)), scalars at cell centers (nx, ny) and
    stream functions on nodes (nx+1, ny+1).
    """
    nx: int
    ny: int
    lx: float
    ly: float
    nx_omega: int
    omega: Box
    collar_rows: int = 3

    def __post_init__(self):
        if self.nx < 4 or self.ny < 4:
            raise GhostDataError(f"Grid too small for one-sided stencils | nx={self.nx} | ny={self.ny}")
        if not 0 < self.nx_omega < self.nx:
            raise ValidationError(f"nx_omega must lie strictly between 0 and nx, got {self.nx_omega}")
        if self.collar_rows < 3:
            raise GhostDataError("Boundary collar needs at least three rows")
        if 2 * self.collar_rows > min(self.nx - self.nx_omega, self.ny):
            raise ValidationError("Boundary collars overlap across the control strip")
        if not self.omega.inside(self.strip):
            raise ValidationError(f"Control region {self.omega} is not inside the strip {self.strip}")
        if self.omega.x0 <= self.x_gamma:
            raise ValidationError("Control region must stay at a positive distance from the interface")

    @classmethod
    def from_config(cls, config: GridConfig) -> "Grid2D":
        nx_omega = int(round(config.nx * config.physical_fraction))
        x0, x1, y0, y1 = config.control_region
        return cls(
            nx=config.nx,
            ny=config.ny,
            lx=config.lx,
            ly=config.ly,
            nx_omega=nx_omega,
            omega=Box(x0, x1, y0, y1),
            collar_rows=config.collar_rows,
        )

    @property
    def hx(self) -> float:
        return self.lx / self.nx

    @property
    def hy(self) -> float:
        return self.ly / self.ny

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    @property
    def x_gamma(self) -> float:
        return self.nx_omega * self.hx

    @property
    def box(self) -> Box:
        return Box(0.0, self.lx, 0.0, self.ly)

    @property
    def physical(self) -> Box:
        return Box(0.0, self.x_gamma, 0.0, self.ly)

    @property
    def strip(self) -> Box:
        return Box(self.x_gamma, self.lx, 0.0, self.ly)

    @property
    def diameter(self) -> float:
        return float(np.hypot(self.x_gamma, self.ly))

    # nested control regions omega' < omega_0 < omega_c < omega
    @property
    def omega_c(self) -> Box:
        return self.omega.shrink(0.1)

    @property
    def omega_0(self) -> Box:
        return self.omega.shrink(0.2)

    @property
    def omega_prime(self) -> Box:
        return self.omega.shrink(0.3)

    @cached_property
    def x_centers(self) -> np.ndarray:
        return (np.arange(self.nx) + 0.5) * self.hx

    @cached_property
    def y_centers(self) -> np.ndarray:
        return (np.arange(self.ny) + 0.5) * self.hy

    @cached_property
    def x_nodes(self) -> np.ndarray:
        return np.arange(self.nx + 1) * self.hx

    @cached_property
    def y_nodes(self) -> np.ndarray:
        return np.arange(self.ny + 1) * self.hy

    def shape(self, location: str) -> Tuple[int, int]:
        return {
            "cell": (self.nx, self.ny),
            "u": (self.nx + 1, self.ny),
            "v": (self.nx, self.ny + 1),
            "node": (self.nx + 1, self.ny + 1),
        }[location]

    def coordinates(self, location: str) -> Tuple[np.ndarray, np.ndarray]:
        """Meshgrid (indexing='ij') of the sample points at a location"""
        if location not in LOCATIONS:
            raise ValidationError(f"Unknown grid location: {location}")
        xs = self.x_nodes if location in ("u", "node") else self.x_centers
        ys = self.y_nodes if location in ("v", "node") else self.y_centers
        return np.meshgrid(xs, ys, indexing="ij")

    @cached_property
    def cell_points(self) -> np.ndarray:
        x, y = self.coordinates("cell")
        return np.stack([x.ravel(), y.ravel()], axis=1)

    def mask(self, region: Box, location: str = "cell", margin: float = 0.0) -> np.ndarray:
        x, y = self.coordinates(location)
        return region.contains(x, y, margin)

    @cached_property
    def physical_cells(self) -> np.ndarray:
        m = np.zeros((self.nx, self.ny), dtype=bool)
        m[: self.nx_omega, :] = True
        return m

    @cached_property
    def physical_closure(self) -> Dict[str, np.ndarray]:
        """Masks of the closed physical domain at every location"""
        tol = 1e-12 * self.lx
        masks = {}
        for location in LOCATIONS:
            x, _ = self.coordinates(location)
            masks[location] = x <= self.x_gamma + tol
        return masks

    @cached_property
    def omega_cells(self) -> np.ndarray:
        return self.mask(self.omega, "cell")

    def side_length(self, side: Side) -> int:
        """Number of wall samples (cell rows or columns) along a side"""
        return self.ny if side.axis == 0 else self.nx

    def side_spacing(self, side: Side) -> Tuple[float, float]:
        """(normal spacing, tangential spacing) of a side"""
        return (self.hx, self.hy) if side.axis == 0 else (self.hy, self.hx)

    def side_coordinate(self, side: Side) -> np.ndarray:
        """Tangential coordinate of the wall samples"""
        return self.y_centers if side.axis == 0 else self.x_centers

    def distance(self, side: Side, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Distance to the side, positive inside the box"""
        return {
            Side.LEFT: x,
            Side.RIGHT: self.lx - x,
            Side.BOTTOM: y,
            Side.TOP: self.ly - y,
        }[side]

    def along(self, side: Side, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return y if side.axis == 0 else x

    def collar_view(self, array: np.ndarray, side: Side, rows: int = None) -> np.ndarray:
        """Cell-centered array reordered as (row from the wall, position along the side)"""
        rows = rows or self.collar_rows
        if side == Side.LEFT:
            return array[:rows, :]
        if side == Side.RIGHT:
            return array[::-1, :][:rows, :]
        if side == Side.BOTTOM:
            return array[:, :rows].T
        return array[:, ::-1][:, :rows].T

    def collar_scatter(self, values: np.ndarray, side: Side) -> np.ndarray:
        """Inverse of collar_view: place (rows, n_side) values into a zero cell array"""
        out = np.zeros((self.nx, self.ny))
        rows = values.shape[0]
        if side == Side.LEFT:
            out[:rows, :] = values
        elif side == Side.RIGHT:
            out[self.nx - rows:, :] = values[::-1, :]
        elif side == Side.BOTTOM:
            out[:, :rows] = values.T
        else:
            out[:, self.ny - rows:] = values.T[:, ::-1]
        return out

    @cached_property
    def boundary_faces(self) -> List[BoundaryFace]:
        faces = []
        for side in Side:
            s = self.side_coordinate(side)
            nrm = tuple(side.normal)
            tng = tuple(side.tangent)
            for k, value in enumerate(s):
                if side.axis == 0:
                    x = 0.0 if side == Side.LEFT else self.lx
                    faces.append(BoundaryFace(side, k, x, float(value), nrm, tng))
                else:
                    y = 0.0 if side == Side.BOTTOM else self.ly
                    faces.append(BoundaryFace(side, k, float(value), y, nrm, tng))
        return faces

    def strip_adjacent(self, side: Side) -> np.ndarray:
        """Wall samples of a side that lie on the strip part of the wall"""
        s = self.side_coordinate(side)
        if side == Side.RIGHT:
            return np.ones_like(s, dtype=bool)
        if side == Side.LEFT:
            return np.zeros_like(s, dtype=bool)
        return s > self.x_gamma

    def same_as(self, other: "Grid2D") -> bool:
        return (
            self.nx == other.nx and self.ny == other.ny and self.nx_omega == other.nx_omega
            and np.isclose(self.lx, other.lx) and np.isclose(self.ly, other.ly)
        )


def build_grid(config: GridConfig) -> Grid2D:
    """Build the computational grid from configuration"""
    grid = Grid2D.from_config(config)
    logger.debug(
        f"Grid built | {grid.nx}x{grid.ny} | physical columns={grid.nx_omega} | "
        f"x_gamma={grid.x_gamma:.4f} | omega={grid.omega}"
    )
    return grid
