"""
Ball partition of the physical domain and smooth time cutoffs
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from ..base import Diagnostics
from ..config import FlushingConfig
from ..exceptions import PartitionError, ValidationError
from ..geometry.grid import Box, Grid2D
from .flowmap import CarrierFlow, default_seeds, trace


logger = logging.getLogger(__name__)


def _ramp(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos])
    return out


def _ramp_derivative(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos]) / x[pos] ** 2
    return out


def cutoff(s, half_width: float):
    """Smooth step: 1 for s <= -half_width, 0 for s >= half_width"""
    if half_width <= 0:
        raise ValidationError(f"Cutoff half width must be positive, got {half_width}")
    x = (half_width - np.asarray(s, dtype=float)) / (2.0 * half_width)
    f, g = _ramp(x), _ramp(1.0 - x)
    value = f / (f + g)
    return float(value) if np.ndim(value) == 0 else value


def cutoff_derivative(s, half_width: float):
    x = (half_width - np.asarray(s, dtype=float)) / (2.0 * half_width)
    f, g = _ramp(x), _ramp(1.0 - x)
    df, dg = _ramp_derivative(x), _ramp_derivative(1.0 - x)
    dh = (df * g + f * dg) / (f + g) ** 2
    value = -dh / (2.0 * half_width)
    return float(value) if np.ndim(value) == 0 else value


def strip_squares(grid: Grid2D, overlap: float = 0.2, gap_cells: int = 2) -> List[Box]:
    """Overlapping squares tiling the control strip, kept gap_cells away from Gamma_c"""
    x0 = grid.x_gamma + gap_cells * grid.hx
    side = min(grid.lx - x0, grid.ly)
    if side <= 0:
        raise ValidationError("Control strip is too thin for the square tiling")
    n = max(int(np.ceil((grid.ly - side) / (side * (1.0 - overlap)) - 1e-12)) + 1, 1)
    centers = np.linspace(0.5 * side, grid.ly - 0.5 * side, n)
    return [Box(x0, x0 + side, c - 0.5 * side, c + 0.5 * side) for c in centers]


def greedy_cover(points: np.ndarray, radius: float) -> np.ndarray:
    """Ball centers chosen among the points until every point is strictly inside a ball"""
    uncovered = np.ones(len(points), dtype=bool)
    centers = []
    while np.any(uncovered):
        c = points[np.argmax(uncovered)]
        centers.append(c)
        uncovered &= np.linalg.norm(points - c, axis=1) >= radius
    return np.array(centers).reshape(-1, 2)


def ball_samples(center: np.ndarray, radius: float, grid: Grid2D, n: int = 16) -> np.ndarray:
    """Center plus boundary samples of a ball, pulled inside the cell-center hull"""
    angles = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
    ring = center + radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    points = np.vstack([center[None, :], ring])
    lo = np.array([0.5 * grid.hx, 0.5 * grid.hy])
    hi = np.array([grid.lx - 0.5 * grid.hx, grid.ly - 0.5 * grid.hy])
    return np.clip(points, lo, hi)


def _longest_run(flags: np.ndarray) -> Tuple[int, int]:
    """(start, end) sample indices of the longest run of True, (-1, -1) if none"""
    best = (-1, -1)
    start = None
    for k, flag in enumerate(list(flags) + [False]):
        if flag and start is None:
            start = k
        elif not flag and start is not None:
            if best[0] < 0 or (k - 1 - start) > (best[1] - best[0]):
                best = (start, k - 1)
            start = None
    return best


@dataclass
class FlushPartition:
    """Balls B_l, activation times t_l, squares Q_{m_l} and partition weights eta_l

    Cells outside every ball form an exterior piece cut off in
    [0, 2 * exterior_half_width], before the carrier flow starts moving.
    """
    grid: Grid2D
    horizon: float
    centers: np.ndarray
    radius: float
    times: np.ndarray
    half_width: float
    squares: List[Box]
    square_index: np.ndarray
    sojourns: np.ndarray
    exterior_half_width: float
    diagnostics: Diagnostics = field(default_factory=Diagnostics)

    def __len__(self) -> int:
        return len(self.centers)

    def square(self, ell: int) -> Box:
        return self.squares[int(self.square_index[ell])]

    def bumps(self, location: str = "cell") -> np.ndarray:
        """exp(1 - 1/(1 - rho^2)) inside each ball, shape (L, *grid.shape(location))"""
        x, y = self.grid.coordinates(location)
        out = np.zeros((len(self),) + x.shape)
        for ell, (cx, cy) in enumerate(self.centers):
            rho2 = ((x - cx) ** 2 + (y - cy) ** 2) / self.radius ** 2
            inside = rho2 < 1.0
            out[ell][inside] = np.exp(1.0 - 1.0 / (1.0 - rho2[inside]))
        return out

    def weights(self, location: str = "cell") -> Tuple[np.ndarray, np.ndarray]:
        """(eta_l per ball, exterior weight); they sum to one everywhere"""
        bumps = self.bumps(location)
        total = bumps.sum(axis=0)
        covered = total > 0.0
        eta = np.where(covered[None], bumps / np.where(covered, total, 1.0)[None], 0.0)
        return eta, (~covered).astype(float)

    def partition_error(self) -> float:
        """max |sum eta_l - 1| over the cells of the physical domain"""
        eta, _ = self.weights("cell")
        return float(np.max(np.abs(eta.sum(axis=0)[self.grid.physical_cells] - 1.0)))

    def cutoffs(self, t: float) -> Tuple[np.ndarray, float]:
        """beta(t - t_l) per ball and the exterior cutoff"""
        beta = cutoff(t - self.times, self.half_width)
        ext = cutoff(t - self.exterior_half_width, self.exterior_half_width)
        return np.atleast_1d(beta), ext

    def cutoff_rates(self, t: float) -> Tuple[np.ndarray, float]:
        rate = cutoff_derivative(t - self.times, self.half_width)
        ext = cutoff_derivative(t - self.exterior_half_width, self.exterior_half_width)
        return np.atleast_1d(rate), ext

    def aggregate(self, t: float, location: str = "cell", derivative: bool = False,
                  weights: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> np.ndarray:
        """sum_l beta(t - t_l) eta_l (or its time derivative) as one weight field"""
        eta, ext = weights if weights is not None else self.weights(location)
        beta, beta_ext = self.cutoff_rates(t) if derivative else self.cutoffs(t)
        return np.tensordot(beta, eta, axes=1) + beta_ext * ext

    def active(self, t: float) -> np.ndarray:
        """Balls whose cutoff is changing at time t"""
        return np.abs(t - self.times) < self.half_width


def build_partition(
    flow: CarrierFlow,
    squares: Optional[List[Box]] = None,
    centers: Optional[np.ndarray] = None,
    radius: Optional[float] = None,
    config: Optional[FlushingConfig] = None,
    margin: Optional[float] = None,
) -> FlushPartition:
    """Cover the physical domain by balls and give each one a window inside a square

    Every ball is traced through the horizon; its window is the longest
    scan interval during which all its samples sit in one square. Samples
    lie on the ball grown by margin (1.5 cells by default), the reach of the
    bilinear transport of a piece supported in the ball. The
    half width is half the shortest window, so (t_l - half, t_l + half)
    stays inside each ball's window.
    """
    config = config or FlushingConfig()
    grid = flow.grid
    horizon = flow.horizon
    radius = radius or config.ball_radius or 1.5 * max(grid.hx, grid.hy)
    squares = squares if squares is not None else strip_squares(grid, config.square_overlap)
    centers = greedy_cover(default_seeds(grid), radius) if centers is None else np.atleast_2d(centers)

    reach = radius + (1.5 * max(grid.hx, grid.hy) if margin is None else margin)
    samples = np.stack([ball_samples(c, reach, grid) for c in centers])
    n_balls, n_samples, _ = samples.shape
    scan = np.linspace(0.0, horizon, config.n_scan + 1)
    path = trace(flow, scan, samples.reshape(-1, 2)).reshape(len(scan), n_balls, n_samples, 2)

    times = np.zeros(n_balls)
    index = np.zeros(n_balls, dtype=int)
    sojourns = np.zeros((n_balls, 2))
    for ell in range(n_balls):
        best = (-1, -1, -1)
        for m, box in enumerate(squares):
            inside = np.all(box.contains(path[:, ell, :, 0], path[:, ell, :, 1]), axis=1)
            start, end = _longest_run(inside)
            if start >= 0 and (best[0] < 0 or end - start > best[2] - best[1]):
                best = (m, start, end)
        m, start, end = best
        if m < 0 or end <= start:
            raise PartitionError(
                f"Ball {ell} at ({centers[ell][0]:.3f}, {centers[ell][1]:.3f}) never sits inside a square; "
                f"try a radius below {radius:.3f}",
                details={"ball": ell, "radius": radius},
            )
        index[ell] = m
        sojourns[ell] = scan[start], scan[end]
        times[ell] = 0.5 * (scan[start] + scan[end])

    half_width = 0.5 * float(np.min(sojourns[:, 1] - sojourns[:, 0]))
    amplitude = getattr(flow, "amplitude", None)
    quiet = amplitude.t0 if amplitude is not None and amplitude.t0 > 0 else float(np.min(sojourns[:, 0]))
    exterior = 0.5 * max(quiet, 1e-3 * horizon)

    partition = FlushPartition(
        grid=grid,
        horizon=horizon,
        centers=centers,
        radius=radius,
        times=times,
        half_width=half_width,
        squares=squares,
        square_index=index,
        sojourns=sojourns,
        exterior_half_width=exterior,
    )
    partition.diagnostics.record("balls", n_balls)
    partition.diagnostics.record("half_width", half_width)
    partition.diagnostics.record("partition_error", partition.partition_error())
    logger.info(
        f"Partition built | balls={n_balls} | squares={len(squares)} | radius={radius:.3f} | half width={half_width:.4f}"
    )
    return partition
