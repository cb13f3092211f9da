"""
Implicit diffusion solves (I - c L) with cached sparse LU factors
"""
import logging
from typing import Dict, List, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .operators import BLOCKS, BlockGhosts, Layout, laplacian_blocks


logger = logging.getLogger(__name__)


def _ghost_key(ghosts: Dict[str, BlockGhosts]) -> Tuple:
    parts = []
    for block in BLOCKS:
        for key in sorted(ghosts[block].factors):
            parts.append((block, key, np.round(ghosts[block].factors[key], 14).tobytes()))
    return tuple(parts)


class HelmholtzSolver:
    """Block-diagonal (I - c L_R) solves for velocity and temperature"""

    def __init__(self, layout: Layout):
        self.layout = layout
        self._cache: Dict[Tuple, List[Tuple[slice, object]]] = {}

    def laplacian(self, ghosts: Dict[str, BlockGhosts]) -> Tuple[sp.csr_matrix, np.ndarray]:
        return laplacian_blocks(self.layout, ghosts)

    def _factors(self, c_velocity: float, c_scalar: float, ghosts: Dict[str, BlockGhosts]):
        key = (round(c_velocity, 15), round(c_scalar, 15), _ghost_key(ghosts))
        if key not in self._cache:
            lap, _ = self.laplacian(ghosts)
            lu = []
            bounds = [(self.layout.su, c_velocity), (self.layout.sv, c_velocity), (self.layout.sc, c_scalar)]
            for sl, c in bounds:
                block = lap[sl, sl]
                n = block.shape[0]
                lu.append((sl, splu((sp.identity(n) - c * block).tocsc())))
            if len(self._cache) > 16:
                self._cache.clear()
            self._cache[key] = lu
            logger.debug(f"Helmholtz factors built | c_vel={c_velocity:.3e} | c_scalar={c_scalar:.3e}")
        return self._cache[key]

    def solve(self, rhs: np.ndarray, c_velocity: float, c_scalar: float, ghosts: Dict[str, BlockGhosts]) -> np.ndarray:
        out = np.empty_like(rhs)
        for sl, lu in self._factors(c_velocity, c_scalar, ghosts):
            out[sl] = lu.solve(rhs[sl])
        return out
