"""
One-dimensional heat equation with interior control, in dense matrices
"""
from typing import Optional

import numpy as np
import scipy.linalg as la

from ..base import LinearControlSystem
from ..exceptions import ValidationError


class HeatSurrogate1D(LinearControlSystem):
    """x' = nu x_xx + chi_omega c on (0, 1) with Dirichlet ends, implicit Euler

    x^{n+1} = H^{-1} (x^n + dt E c^n) with H = I - nu dt L. The control acts
    on the points with coordinate above 1 - control_fraction.
    """

    def __init__(self, points: int = 20, n_steps: int = 40, horizon: float = 0.5, viscosity: float = 1.0,
                 control_fraction: float = 1.0 / 3.0, kappa_inverse: Optional[np.ndarray] = None):
        if points < 3 or n_steps < 1:
            raise ValidationError(f"Heat surrogate needs >= 3 points and >= 1 step, got {points}, {n_steps}")
        self.points = points
        self.h = 1.0 / (points + 1)
        self.x = np.arange(1, points + 1) * self.h
        self._n_steps = n_steps
        self._dt = horizon / n_steps
        self.horizon = horizon
        laplacian = (np.diag(-2.0 * np.ones(points)) + np.diag(np.ones(points - 1), 1)
                     + np.diag(np.ones(points - 1), -1)) / self.h ** 2
        self.H = np.eye(points) - viscosity * self._dt * laplacian
        self.lu = la.lu_factor(self.H)
        self.control_index = np.flatnonzero(self.x > 1.0 - control_fraction)
        self.E = np.eye(points)[:, self.control_index]
        self._kinv = np.ones(n_steps) if kappa_inverse is None else np.asarray(kappa_inverse, dtype=float)
        if self._kinv.shape != (n_steps,):
            raise ValidationError(f"kappa_inverse must have shape ({n_steps},), got {self._kinv.shape}")

    @property
    def n_steps(self) -> int:
        return self._n_steps

    @property
    def dt(self) -> float:
        return self._dt

    @property
    def state_size(self) -> int:
        return self.points

    @property
    def control_size(self) -> int:
        return int(self.control_index.size)

    @property
    def weight(self) -> float:
        return self.h

    def propagate(self, x0: np.ndarray, controls: Optional[np.ndarray] = None) -> np.ndarray:
        x = np.asarray(x0, dtype=float).copy()
        for n in range(self.n_steps):
            rhs = x if controls is None else x + self.dt * (self.E @ controls[n])
            x = la.lu_solve(self.lu, rhs)
        return x

    def backpropagate(self, terminal: np.ndarray) -> np.ndarray:
        lam = np.asarray(terminal, dtype=float).copy()
        out = np.zeros((self.n_steps, self.control_size))
        for n in reversed(range(self.n_steps)):
            lam = la.lu_solve(self.lu, lam, trans=1)
            out[n] = self.dt * (self.E.T @ lam)
        return out

    def control_weights(self) -> np.ndarray:
        return self._kinv.copy()

    def mode(self, k: int = 1) -> np.ndarray:
        """sin(k pi x) sampled on the interior points"""
        return np.sin(k * np.pi * self.x)
