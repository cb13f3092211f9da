"""
Neumann Poisson solver (PCG with a cosine-transform preconditioner) and pressure projection
"""
import logging
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy import fft
from scipy.sparse.linalg import LinearOperator, cg

from ..exceptions import ConvergenceError
from .operators import Layout


logger = logging.getLogger(__name__)


def neumann_matrix(shape: Tuple[int, int], hx: float, hy: float) -> sp.csr_matrix:
    """Positive semidefinite -Lap with homogeneous Neumann conditions on cells"""
    def second_difference(n: int, h: float) -> sp.csr_matrix:
        main = np.full(n, 2.0)
        main[0] = main[-1] = 1.0
        return sp.diags([-np.ones(n - 1), main, -np.ones(n - 1)], [-1, 0, 1]) / h ** 2

    m, n = shape
    return (sp.kron(second_difference(m, hx), sp.identity(n)) + sp.kron(sp.identity(m), second_difference(n, hy))).tocsr()


class PoissonSolver:
    """Solve -Lap p = f with Neumann walls on a rectangle of cells

    The five-point Neumann Laplacian is diagonal in the DCT-II basis, so
    the preconditioner is its exact pseudo-inverse and PCG converges in a
    couple of iterations; the CG loop still certifies the residual.
    """

    def __init__(self, shape: Tuple[int, int], hx: float, hy: float, tol: float = 1e-10, maxiter: int = 200):
        self.shape = shape
        self.hx = hx
        self.hy = hy
        self.tol = tol
        self.maxiter = maxiter
        self.matrix = neumann_matrix(shape, hx, hy)
        m, n = shape
        lx = (2.0 - 2.0 * np.cos(np.pi * np.arange(m) / m)) / hx ** 2
        ly = (2.0 - 2.0 * np.cos(np.pi * np.arange(n) / n)) / hy ** 2
        symbol = lx[:, None] + ly[None, :]
        symbol[0, 0] = np.inf
        self._inverse_symbol = 1.0 / symbol
        size = m * n
        self._preconditioner = LinearOperator((size, size), matvec=self._apply_preconditioner, dtype=float)
        self.last_iterations = 0

    def _apply_preconditioner(self, r: np.ndarray) -> np.ndarray:
        coeffs = fft.dctn(r.reshape(self.shape), type=2, norm="ortho") * self._inverse_symbol
        return fft.idctn(coeffs, type=2, norm="ortho").ravel()

    def solve(self, rhs: np.ndarray, operation: str = "poisson") -> np.ndarray:
        """Mean-zero solution; the mean of rhs is removed first"""
        f = np.asarray(rhs, dtype=float).ravel()
        f = f - f.mean()
        norm_f = float(np.linalg.norm(f))
        if norm_f == 0.0:
            return np.zeros(self.shape)

        iterations = 0

        def count(_):
            nonlocal iterations
            iterations += 1

        x0 = self._apply_preconditioner(f)
        x, info = cg(self.matrix, f, x0=x0, rtol=self.tol, maxiter=self.maxiter, M=self._preconditioner, callback=count)
        residual = float(np.linalg.norm(self.matrix @ x - f)) / norm_f
        self.last_iterations = iterations
        if info != 0 and residual > 10.0 * self.tol:
            raise ConvergenceError(
                f"{operation} PCG did not converge | residual={residual:.3e} | iterations={iterations}",
                residual=residual,
            )
        x = x - x.mean()
        return x.reshape(self.shape)


class Projector:
    """Discrete Leray projection with prescribed divergence"""

    def __init__(self, layout: Layout, tol: float = 1e-10, maxiter: int = 200):
        self.layout = layout
        g = layout.grid
        self.poisson = PoissonSolver((g.nx, g.ny), g.hx, g.hy, tol, maxiter)
        self.D = layout.divergence
        self.G = layout.gradient
        self.last_residual = 0.0

    def potential(self, xu: np.ndarray, sigma: Optional[np.ndarray] = None) -> np.ndarray:
        """phi with xu - G phi having divergence sigma"""
        target = np.zeros(self.layout.n_c) if sigma is None else np.asarray(sigma, dtype=float).ravel()
        mean = float(target.mean())
        if abs(mean) > 1e-9 * max(float(np.max(np.abs(target))), 1e-300):
            logger.warning(f"Divergence source has nonzero mean, removing it | mean={mean:.3e}")
            target = target - mean
        return self.poisson.solve(target - self.D @ xu, "projection").ravel()

    def project(self, xu: np.ndarray, sigma: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
        phi = self.potential(xu, sigma)
        out = xu - self.G @ phi
        target = np.zeros(self.layout.n_c) if sigma is None else np.asarray(sigma).ravel() - np.mean(sigma)
        self.last_residual = float(np.max(np.abs(self.D @ out - target))) if out.size else 0.0
        return out, phi

    def lift(self, sigma: np.ndarray) -> np.ndarray:
        """Gradient field with divergence sigma (zero when sigma vanishes)"""
        return self.project(np.zeros(self.layout.n_vel), sigma)[0]

    def apply(self, xu: np.ndarray) -> np.ndarray:
        return self.project(xu)[0]
