"""
Immutable grid fields
"""
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from ..base import FieldKind
from ..exceptions import GridMismatchError, ValidationError
from .grid import Grid2D


def _frozen(array: np.ndarray) -> np.ndarray:
    out = np.array(array, dtype=float, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Field:
    """Scalar field at cell centers or vector field on MAC faces"""
    grid: Grid2D
    kind: FieldKind
    data: Tuple[np.ndarray, ...]
    time: float = 0.0

    def __post_init__(self):
        if self.kind == FieldKind.SCALAR:
            expected = (self.grid.shape("cell"),)
        else:
            expected = (self.grid.shape("u"), self.grid.shape("v"))
        shapes = tuple(np.shape(a) for a in self.data)
        if shapes != expected:
            raise GridMismatchError(f"Field arrays {shapes} do not match grid layout {expected}")
        object.__setattr__(self, "data", tuple(_frozen(a) for a in self.data))

    @classmethod
    def scalar(cls, grid: Grid2D, values: np.ndarray, time: float = 0.0) -> "Field":
        return cls(grid, FieldKind.SCALAR, (values,), time)

    @classmethod
    def vector(cls, grid: Grid2D, u: np.ndarray, v: np.ndarray, time: float = 0.0) -> "Field":
        return cls(grid, FieldKind.VECTOR, (u, v), time)

    @classmethod
    def zeros(cls, grid: Grid2D, kind: FieldKind, time: float = 0.0) -> "Field":
        if kind == FieldKind.SCALAR:
            return cls.scalar(grid, np.zeros(grid.shape("cell")), time)
        return cls.vector(grid, np.zeros(grid.shape("u")), np.zeros(grid.shape("v")), time)

    @property
    def values(self) -> np.ndarray:
        if self.kind != FieldKind.SCALAR:
            raise ValidationError("values is only defined for scalar fields")
        return self.data[0]

    @property
    def u(self) -> np.ndarray:
        if self.kind != FieldKind.VECTOR:
            raise ValidationError("u is only defined for vector fields")
        return self.data[0]

    @property
    def v(self) -> np.ndarray:
        if self.kind != FieldKind.VECTOR:
            raise ValidationError("v is only defined for vector fields")
        return self.data[1]

    def with_time(self, time: float) -> "Field":
        return Field(self.grid, self.kind, self.data, time)

    def _check(self, other: "Field") -> None:
        if not self.grid.same_as(other.grid):
            raise GridMismatchError("Fields live on different grids")
        if self.kind != other.kind:
            raise ValidationError("Cannot combine scalar and vector fields")

    def __add__(self, other: "Field") -> "Field":
        self._check(other)
        return Field(self.grid, self.kind, tuple(a + b for a, b in zip(self.data, other.data)), self.time)

    def __sub__(self, other: "Field") -> "Field":
        self._check(other)
        return Field(self.grid, self.kind, tuple(a - b for a, b in zip(self.data, other.data)), self.time)

    def __mul__(self, factor: Union[float, int]) -> "Field":
        return Field(self.grid, self.kind, tuple(factor * a for a in self.data), self.time)

    __rmul__ = __mul__

    def cell_vectors(self) -> Tuple[np.ndarray, np.ndarray]:
        """Vector components averaged to cell centers"""
        return 0.5 * (self.u[1:, :] + self.u[:-1, :]), 0.5 * (self.v[:, 1:] + self.v[:, :-1])

    def l2_norm(self) -> float:
        g = self.grid
        if self.kind == FieldKind.SCALAR:
            return float(np.sqrt(np.sum(self.values ** 2) * g.cell_area))
        # interior faces carry the unknowns; boundary normal faces vanish for admissible fields
        su = np.sum(self.u ** 2) - 0.5 * (np.sum(self.u[0] ** 2) + np.sum(self.u[-1] ** 2))
        sv = np.sum(self.v ** 2) - 0.5 * (np.sum(self.v[:, 0] ** 2) + np.sum(self.v[:, -1] ** 2))
        return float(np.sqrt(max(su + sv, 0.0) * g.cell_area))

    def max_abs(self) -> float:
        return float(max(np.max(np.abs(a)) for a in self.data))

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.data)


def state_norm(u: Field, theta: Field) -> float:
    """Combined L2 norm of a velocity/temperature pair"""
    return float(np.hypot(u.l2_norm(), theta.l2_norm()))
