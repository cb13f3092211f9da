"""
Sparse MAC operators on packed state vectors

A state vector packs the interior u faces ((nx-1)*ny), the interior v
faces (nx*(ny-1)) and the cell temperatures (nx*ny), each block in C order
of its (i, j) array. Wall-normal faces are not unknowns: they vanish.
"""
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp

from ..base import Side
from ..geometry.boundary import BoundaryCoefficients
from ..geometry.grid import Grid2D


BLOCKS = ("u", "v", "c")


@dataclass(frozen=True)
class Layout:
    """Packing of (u, v, theta) into one vector"""
    grid: Grid2D

    @property
    def n_u(self) -> int:
        return (self.grid.nx - 1) * self.grid.ny

    @property
    def n_v(self) -> int:
        return self.grid.nx * (self.grid.ny - 1)

    @property
    def n_c(self) -> int:
        return self.grid.nx * self.grid.ny

    @property
    def n_vel(self) -> int:
        return self.n_u + self.n_v

    @property
    def size(self) -> int:
        return self.n_vel + self.n_c

    @property
    def su(self) -> slice:
        return slice(0, self.n_u)

    @property
    def sv(self) -> slice:
        return slice(self.n_u, self.n_vel)

    @property
    def sc(self) -> slice:
        return slice(self.n_vel, self.size)

    def block_range(self, block: str) -> Tuple[Tuple[int, int], Tuple[int, int]]:
        """Inclusive (i, j) ranges of a block in full array indices"""
        nx, ny = self.grid.nx, self.grid.ny
        return {
            "u": ((1, nx - 1), (0, ny - 1)),
            "v": ((0, nx - 1), (1, ny - 1)),
            "c": ((0, nx - 1), (0, ny - 1)),
        }[block]

    def block_shape(self, block: str) -> Tuple[int, int]:
        (i0, i1), (j0, j1) = self.block_range(block)
        return i1 - i0 + 1, j1 - j0 + 1

    def pack_velocity(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        return np.concatenate([u[1:-1, :].ravel(), v[:, 1:-1].ravel()])

    def unpack_velocity(self, xu: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        g = self.grid
        u = np.zeros(g.shape("u"))
        v = np.zeros(g.shape("v"))
        u[1:-1, :] = xu[: self.n_u].reshape(g.nx - 1, g.ny)
        v[:, 1:-1] = xu[self.n_u: self.n_vel].reshape(g.nx, g.ny - 1)
        return u, v

    def pack(self, u: np.ndarray, v: np.ndarray, theta: np.ndarray) -> np.ndarray:
        return np.concatenate([self.pack_velocity(u, v), np.asarray(theta).ravel()])

    def unpack(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        u, v = self.unpack_velocity(x[: self.n_vel])
        return u, v, x[self.sc].reshape(self.grid.nx, self.grid.ny)

    def coordinates(self, block: str) -> Tuple[np.ndarray, np.ndarray]:
        (i0, i1), (j0, j1) = self.block_range(block)
        return np.meshgrid(np.arange(i0, i1 + 1), np.arange(j0, j1 + 1), indexing="ij")

    def packed_index(self, block: str, i: np.ndarray, j: np.ndarray) -> np.ndarray:
        (i0, _), (j0, j1) = self.block_range(block)
        return (i - i0) * (j1 - j0 + 1) + (j - j0)

    def inside(self, block: str, i: np.ndarray, j: np.ndarray) -> np.ndarray:
        (i0, i1), (j0, j1) = self.block_range(block)
        return (i >= i0) & (i <= i1) & (j >= j0) & (j <= j1)

    def stencil(self, out_block: str, in_block: str, entries: Sequence[Tuple[int, int, Union[float, np.ndarray]]]) -> sp.csr_matrix:
        """Sparse map from one block to another; out-of-range neighbours are dropped"""
        I, J = self.coordinates(out_block)
        out_index = self.packed_index(out_block, I, J)
        rows, cols, vals = [], [], []
        for di, dj, weight in entries:
            w = np.broadcast_to(np.asarray(weight, dtype=float), I.shape)
            Ii, Jj = I + di, J + dj
            valid = self.inside(in_block, Ii, Jj)
            rows.append(out_index[valid])
            cols.append(self.packed_index(in_block, Ii[valid], Jj[valid]))
            vals.append(w[valid])
        n_out = int(np.prod(self.block_shape(out_block)))
        n_in = int(np.prod(self.block_shape(in_block)))
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n_out, n_in)
        )

    def assemble(self, blocks: Dict[Tuple[str, str], sp.spmatrix]) -> sp.csr_matrix:
        """Full (size x size) matrix from (out, in) blocks"""
        grid_blocks = [[blocks.get((a, b)) for b in BLOCKS] for a in BLOCKS]
        for a_idx, a in enumerate(BLOCKS):
            for b_idx, b in enumerate(BLOCKS):
                if grid_blocks[a_idx][b_idx] is None and a_idx == b_idx:
                    n = int(np.prod(self.block_shape(a)))
                    grid_blocks[a_idx][b_idx] = sp.csr_matrix((n, n))
        return sp.bmat(grid_blocks, format="csr")

    def velocity_block(self, blocks: Dict[Tuple[str, str], sp.spmatrix]) -> sp.csr_matrix:
        grid_blocks = [[blocks.get((a, b)) for b in ("u", "v")] for a in ("u", "v")]
        for k, a in enumerate(("u", "v")):
            if grid_blocks[k][k] is None:
                n = int(np.prod(self.block_shape(a)))
                grid_blocks[k][k] = sp.csr_matrix((n, n))
        return sp.bmat(grid_blocks, format="csr")

    # interpolation between staggered locations

    @cached_property
    def v_to_u(self) -> sp.csr_matrix:
        return self.stencil("u", "v", [(-1, 0, 0.25), (0, 0, 0.25), (-1, 1, 0.25), (0, 1, 0.25)])

    @cached_property
    def u_to_v(self) -> sp.csr_matrix:
        return self.stencil("v", "u", [(0, -1, 0.25), (1, -1, 0.25), (0, 0, 0.25), (1, 0, 0.25)])

    @cached_property
    def c_to_v(self) -> sp.csr_matrix:
        return self.stencil("v", "c", [(0, -1, 0.5), (0, 0, 0.5)])

    @cached_property
    def c_to_u(self) -> sp.csr_matrix:
        return self.stencil("u", "c", [(-1, 0, 0.5), (0, 0, 0.5)])

    @cached_property
    def u_to_c(self) -> sp.csr_matrix:
        return self.stencil("c", "u", [(0, 0, 0.5), (1, 0, 0.5)])

    @cached_property
    def v_to_c(self) -> sp.csr_matrix:
        return self.stencil("c", "v", [(0, 0, 0.5), (0, 1, 0.5)])

    @cached_property
    def divergence(self) -> sp.csr_matrix:
        """D: interior faces -> cells; the gradient is G = -D^T"""
        g = self.grid
        du = self.stencil("c", "u", [(1, 0, 1.0 / g.hx), (0, 0, -1.0 / g.hx)])
        dv = self.stencil("c", "v", [(0, 1, 1.0 / g.hy), (0, 0, -1.0 / g.hy)])
        return sp.hstack([du, dv], format="csr")

    @cached_property
    def gradient(self) -> sp.csr_matrix:
        return (-self.divergence.T).tocsr()


def robin_factor(kappa: np.ndarray, h: float) -> np.ndarray:
    """Ghost factor f with ghost = f * first + offset for d/dnu + kappa"""
    return (1.0 - 0.5 * kappa * h) / (1.0 + 0.5 * kappa * h)


def robin_offset(data: np.ndarray, kappa: np.ndarray, h: float) -> np.ndarray:
    return data * h / (1.0 + 0.5 * kappa * h)


@dataclass
class BlockGhosts:
    """Ghost factors and offsets at the four ends of one block

    Keys are (axis, upper) with arrays indexed along the other axis. A
    missing key means the neighbour is a wall-normal face (zero).
    """
    factors: Dict[Tuple[int, bool], np.ndarray] = field(default_factory=dict)
    offsets: Dict[Tuple[int, bool], np.ndarray] = field(default_factory=dict)


@dataclass
class BoundaryData:
    """Inhomogeneous Navier (tangential) and Robin data per side"""
    navier: Dict[Side, np.ndarray] = field(default_factory=dict)
    robin: Dict[Side, np.ndarray] = field(default_factory=dict)

    def is_zero(self) -> bool:
        return all(not np.any(a) for a in list(self.navier.values()) + list(self.robin.values()))

    def scaled(self, factor: float) -> "BoundaryData":
        return BoundaryData(
            {s: factor * a for s, a in self.navier.items()},
            {s: factor * a for s, a in self.robin.items()},
        )


def _faces_from_cells(values: np.ndarray) -> np.ndarray:
    """Average wall samples at cell centers to the interior face positions between them"""
    return 0.5 * (values[1:] + values[:-1])


SIDE_KEYS = {
    Side.LEFT: (0, False),
    Side.RIGHT: (0, True),
    Side.BOTTOM: (1, False),
    Side.TOP: (1, True),
}


def build_ghosts(grid: Grid2D, coeffs: BoundaryCoefficients, data: Optional[BoundaryData] = None) -> Dict[str, BlockGhosts]:
    """Ghost rules of the u, v and theta blocks

    Tangential velocity: d u_tau/d nu + 2 M_tt u_tau = 2 N-data.
    Temperature: d theta/d nu + m theta = R-data.
    """
    data = data or BoundaryData()
    ghosts = {b: BlockGhosts() for b in BLOCKS}
    for side in Side:
        key = SIDE_KEYS[side]
        h_normal = grid.hx if side.axis == 0 else grid.hy
        n_side = grid.side_length(side)

        kappa_t = 2.0 * _faces_from_cells(coeffs.tangential_friction(side))
        g_t = 2.0 * _faces_from_cells(np.asarray(data.navier.get(side, np.zeros(n_side)), dtype=float))
        block = "v" if side.axis == 0 else "u"
        ghosts[block].factors[key] = robin_factor(kappa_t, h_normal)
        ghosts[block].offsets[key] = robin_offset(g_t, kappa_t, h_normal)

        kappa_c = coeffs.heat[side]
        g_c = np.asarray(data.robin.get(side, np.zeros(n_side)), dtype=float)
        ghosts["c"].factors[key] = robin_factor(kappa_c, h_normal)
        ghosts["c"].offsets[key] = robin_offset(g_c, kappa_c, h_normal)
    return ghosts


def _end_mask(layout: Layout, block: str, axis: int, upper: bool) -> np.ndarray:
    shape = layout.block_shape(block)
    mask = np.zeros(shape, dtype=bool)
    idx = -1 if upper else 0
    if axis == 0:
        mask[idx, :] = True
    else:
        mask[:, idx] = True
    return mask


def _end_values(layout: Layout, block: str, axis: int, upper: bool, values: np.ndarray) -> np.ndarray:
    """Spread per-end values over a block-shaped array (zero elsewhere)"""
    shape = layout.block_shape(block)
    out = np.zeros(shape)
    idx = -1 if upper else 0
    if axis == 0:
        out[idx, :] = values
    else:
        out[:, idx] = values
    return out


def laplacian_blocks(layout: Layout, ghosts: Dict[str, BlockGhosts]) -> Tuple[sp.csr_matrix, np.ndarray]:
    """Block-diagonal Laplacian with ghost rules and the vector of data offsets"""
    g = layout.grid
    wx, wy = 1.0 / g.hx ** 2, 1.0 / g.hy ** 2
    mats, offs = {}, []
    for block in BLOCKS:
        base = layout.stencil(block, block, [
            (1, 0, wx), (-1, 0, wx), (0, 1, wy), (0, -1, wy), (0, 0, -2.0 * (wx + wy)),
        ])
        diag = np.zeros(layout.block_shape(block))
        off = np.zeros(layout.block_shape(block))
        for (axis, upper), factor in ghosts[block].factors.items():
            w = wx if axis == 0 else wy
            diag += w * _end_values(layout, block, axis, upper, factor)
            off += w * _end_values(layout, block, axis, upper, ghosts[block].offsets[(axis, upper)])
        mats[(block, block)] = (base + sp.diags(diag.ravel())).tocsr()
        offs.append(off.ravel())
    return layout.assemble(mats), np.concatenate(offs)


def transport_velocity(layout: Layout, u: np.ndarray, v: np.ndarray) -> Dict[str, Tuple[np.ndarray, np.ndarray]]:
    """Advecting velocity sampled at the unknowns of every block"""
    return {
        "u": (u[1:-1, :], 0.25 * (v[:-1, :-1] + v[1:, :-1] + v[:-1, 1:] + v[1:, 1:])),
        "v": (0.25 * (u[:-1, :-1] + u[1:, :-1] + u[:-1, 1:] + u[1:, 1:]), v[:, 1:-1]),
        "c": (0.5 * (u[1:, :] + u[:-1, :]), 0.5 * (v[:, 1:] + v[:, :-1])),
    }


def advection_blocks(
    layout: Layout,
    ghosts: Dict[str, BlockGhosts],
    u: np.ndarray,
    v: np.ndarray,
    blocks: Sequence[str] = BLOCKS,
) -> Tuple[sp.csr_matrix, np.ndarray]:
    """Centered (a . grad) on each block with ghost rules; returns matrix and data offsets"""
    g = layout.grid
    speeds = transport_velocity(layout, u, v)
    mats, offs = {}, []
    for block in BLOCKS:
        if block not in blocks:
            offs.append(np.zeros(int(np.prod(layout.block_shape(block)))))
            continue
        ax, ay = speeds[block]
        cx, cy = ax / (2.0 * g.hx), ay / (2.0 * g.hy)
        base = layout.stencil(block, block, [(1, 0, cx), (-1, 0, -cx), (0, 1, cy), (0, -1, -cy)])
        diag = np.zeros(layout.block_shape(block))
        off = np.zeros(layout.block_shape(block))
        for (axis, upper), factor in ghosts[block].factors.items():
            coef = cx if axis == 0 else cy
            sign = 1.0 if upper else -1.0
            end = _end_mask(layout, block, axis, upper)
            diag += sign * coef * end * _end_values(layout, block, axis, upper, factor)
            off += sign * coef * end * _end_values(layout, block, axis, upper, ghosts[block].offsets[(axis, upper)])
        mats[(block, block)] = (base + sp.diags(diag.ravel())).tocsr()
        offs.append(off.ravel())
    return layout.assemble(mats), np.concatenate(offs)


def stretching_block(layout: Layout, bu: np.ndarray, bv: np.ndarray) -> sp.csr_matrix:
    """Velocity block of z -> (z . grad) b for a fixed MAC field b"""
    g = layout.grid
    dbu_dx = np.gradient(bu, g.hx, axis=0, edge_order=2)[1:-1, :]
    dbu_dy = np.gradient(bu, g.hy, axis=1, edge_order=2)[1:-1, :]
    dbv_dx = np.gradient(bv, g.hx, axis=0, edge_order=2)[:, 1:-1]
    dbv_dy = np.gradient(bv, g.hy, axis=1, edge_order=2)[:, 1:-1]
    return layout.velocity_block({
        ("u", "u"): sp.diags(dbu_dx.ravel()),
        ("u", "v"): sp.diags(dbu_dy.ravel()) @ layout.v_to_u,
        ("v", "u"): sp.diags(dbv_dx.ravel()) @ layout.u_to_v,
        ("v", "v"): sp.diags(dbv_dy.ravel()),
    })


def coupling_block(layout: Layout, c: np.ndarray) -> sp.csr_matrix:
    """Map z -> z . grad c from velocity to cells"""
    g = layout.grid
    cx = np.gradient(c, g.hx, axis=0, edge_order=2)
    cy = np.gradient(c, g.hy, axis=1, edge_order=2)
    return sp.hstack([sp.diags(cx.ravel()) @ layout.u_to_c, sp.diags(cy.ravel()) @ layout.v_to_c], format="csr")


def buoyancy_block(layout: Layout) -> sp.csr_matrix:
    """Map theta -> theta e2 from cells to velocity"""
    return sp.vstack([sp.csr_matrix((layout.n_u, layout.n_c)), layout.c_to_v], format="csr")


def combine(layout: Layout, velocity: Optional[sp.spmatrix] = None, coupling: Optional[sp.spmatrix] = None,
            buoyancy: Optional[sp.spmatrix] = None, scalar: Optional[sp.spmatrix] = None) -> sp.csr_matrix:
    """Full operator from its velocity/velocity, cell/velocity, velocity/cell and cell/cell parts"""
    nv, nc = layout.n_vel, layout.n_c
    return sp.bmat([
        [velocity if velocity is not None else sp.csr_matrix((nv, nv)), buoyancy],
        [coupling, scalar if scalar is not None else sp.csr_matrix((nc, nc))],
    ], format="csr")
