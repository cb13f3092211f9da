"""
Penalized HUM controller solved by conjugate gradient on the terminal adjoint data
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from ..base import Diagnostics, LinearControlSystem, check_positive
from ..config import HUMConfig, SolverConfig
from ..exceptions import ValidationError
from ..geometry.fields import Field
from ..solver.linearized import LinearCoefficients, LinearizedSolver
from ..solver.state import Trajectory
from .weights import CarlemanWeights


logger = logging.getLogger(__name__)


@dataclass
class HumIteration:
    iteration: int
    residual: float
    dual_cost: float
    terminal_norm: float


@dataclass
class HUMSolution:
    """Minimizer of 1/2 sum dt kappa w |c|^2 + 1/(2 penalty) w |x^N|^2

    terminal_adjoint is phi = -x^N / penalty and controls[n] equals
    kappa^{-1}_n times the adjoint state at step n on the control unknowns.
    """
    terminal_adjoint: np.ndarray
    controls: np.ndarray
    terminal_state: np.ndarray
    initial_norm: float
    terminal_norm: float
    cost: float
    kappa_norm: float
    penalty: float
    iterations: List[HumIteration] = field(default_factory=list)
    converged: bool = True
    optimality_residual: float = 0.0
    trajectory: Optional[Trajectory] = None
    diagnostics: Diagnostics = field(default_factory=Diagnostics)

    @property
    def reduction(self) -> float:
        return self.terminal_norm / self.initial_norm if self.initial_norm > 0.0 else 0.0

    @property
    def terminal_bound(self) -> float:
        """sqrt(2 penalty cost), an upper bound of terminal_norm"""
        return float(np.sqrt(2.0 * self.penalty * self.cost))


def adjoint_controls(system: LinearControlSystem, phi: np.ndarray, kinv: np.ndarray) -> np.ndarray:
    """kappa^{-1}_n mu^n restricted to the control unknowns"""
    return kinv[:, None] * system.backpropagate(phi) / system.dt


def _cost(system: LinearControlSystem, controls: np.ndarray, kinv: np.ndarray, terminal: np.ndarray, penalty: float):
    """(cost, kappa-weighted control norm)"""
    w = system.weight
    active = kinv > 0.0
    weighted = np.zeros(system.n_steps)
    weighted[active] = np.sum(controls[active] ** 2, axis=1) / kinv[active]
    kappa_norm = float(np.sqrt(w * system.dt * np.sum(weighted)))
    cost = 0.5 * kappa_norm ** 2 + 0.5 * w * float(terminal @ terminal) / penalty
    return cost, kappa_norm


def hum_solve(
    system: LinearControlSystem,
    x0: np.ndarray,
    penalty: Optional[float] = None,
    config: Optional[HUMConfig] = None,
    kappa_inverse: Optional[np.ndarray] = None,
    guess: Optional[np.ndarray] = None,
) -> HUMSolution:
    """Solve (Lambda + penalty I) phi = -x_free by conjugate gradient

    Lambda phi is the terminal state reached from rest with the controls
    generated by phi, so each application is one backward and one forward
    solve. The best iterate is returned, flagged, when the relative
    residual stops improving over the stagnation window or max_iter runs out.
    """
    config = config or HUMConfig()
    penalty = check_positive("penalty", config.penalty if penalty is None else penalty)
    kinv = system.control_weights() if kappa_inverse is None else np.asarray(kappa_inverse, dtype=float)
    if kinv.shape != (system.n_steps,):
        raise ValidationError(f"kappa_inverse must have shape ({system.n_steps},), got {kinv.shape}")
    if np.any(kinv < 0.0) or not np.all(np.isfinite(kinv)):
        raise ValidationError("kappa_inverse must be finite and nonnegative")

    x0 = np.asarray(x0, dtype=float)
    w = system.weight
    initial_norm = float(np.sqrt(w * (x0 @ x0)))
    x_free = system.propagate(x0)
    b = -x_free
    b_norm = float(np.linalg.norm(b))
    zero_controls = np.zeros((system.n_steps, system.control_size))
    if b_norm == 0.0:
        logger.info("HUM | free terminal state is zero, zero control is optimal")
        return HUMSolution(np.zeros_like(b), zero_controls, x_free, initial_norm, 0.0, 0.0, 0.0, penalty)

    def gramian(p: np.ndarray) -> np.ndarray:
        return system.propagate(np.zeros_like(p), adjoint_controls(system, p, kinv))

    phi = np.zeros_like(b) if guess is None else np.asarray(guess, dtype=float).copy()
    lam_phi = gramian(phi) if guess is not None else np.zeros_like(b)
    r = b - lam_phi - penalty * phi
    p = r.copy()
    rr = float(r @ r)

    log: List[HumIteration] = []
    best_phi, best_lam, best_res = phi.copy(), lam_phi.copy(), np.sqrt(rr) / b_norm
    since_best = 0
    converged = best_res <= config.tol

    for k in range(1, config.max_iter + 1):
        if converged:
            break
        lam_p = gramian(p)
        ap = lam_p + penalty * p
        curvature = float(p @ ap)
        if curvature <= 0.0:
            logger.warning(f"HUM | non-positive curvature at iteration {k}: {curvature:.3e}")
            break
        step = rr / curvature
        phi = phi + step * p
        lam_phi = lam_phi + step * lam_p
        r = r - step * ap
        rr_new = float(r @ r)
        residual = np.sqrt(rr_new) / b_norm

        dual = 0.5 * float(phi @ (lam_phi + penalty * phi)) - float(b @ phi)
        terminal = x_free + lam_phi
        log.append(HumIteration(k, float(residual), dual, float(np.sqrt(w * (terminal @ terminal)))))
        logger.debug(f"HUM iter {k} | residual={residual:.3e} | dual={dual:.6e} | terminal={log[-1].terminal_norm:.3e}")

        if residual < 0.999 * best_res:
            best_phi, best_lam, best_res = phi.copy(), lam_phi.copy(), residual
            since_best = 0
        else:
            since_best += 1
        if residual <= config.tol:
            converged = True
            break
        if since_best >= config.stagnation_window:
            logger.warning(f"HUM | stagnated over {since_best} iterations | best residual={best_res:.3e}")
            break
        p = r + (rr_new / rr) * p
        rr = rr_new

    controls = adjoint_controls(system, best_phi, kinv)
    terminal = system.propagate(x0, controls)
    cost, kappa_norm = _cost(system, controls, kinv, terminal, penalty)
    check = adjoint_controls(system, best_phi, kinv)
    solution = HUMSolution(
        terminal_adjoint=best_phi,
        controls=controls,
        terminal_state=terminal,
        initial_norm=initial_norm,
        terminal_norm=float(np.sqrt(w * (terminal @ terminal))),
        cost=cost,
        kappa_norm=kappa_norm,
        penalty=penalty,
        iterations=log,
        converged=converged,
        optimality_residual=float(np.max(np.abs(controls - check))) if controls.size else 0.0,
    )
    solution.diagnostics.record("relative_residual", best_res)
    solution.diagnostics.record("incremental_terminal_gap", float(np.linalg.norm(x_free + best_lam - terminal)))
    if not converged:
        solution.diagnostics.warn(f"CG stopped at relative residual {best_res:.3e} above tol {config.tol:.1e}")

    status = "✅" if converged else "⚠️"
    logger.info(
        f"{status} HUM | iterations={len(log)} | residual={best_res:.3e} | cost={cost:.4e} | "
        f"terminal={solution.terminal_norm:.3e} | bound={solution.terminal_bound:.3e} | kappa-norm={kappa_norm:.3e}"
    )
    return solution


def controlled_trajectory(solver: LinearizedSolver, x0: np.ndarray, controls: np.ndarray) -> List[np.ndarray]:
    """Packed states x^0..x^N under the given controls"""
    sources = [solver.embed(c) for c in controls]
    return solver.propagate_sources(x0, sources, keep=False)


def hum_control(
    z0: Field,
    h0: Field,
    coefficients: LinearCoefficients,
    weights: CarlemanWeights,
    config: Optional[HUMConfig] = None,
    solver_config: Optional[SolverConfig] = None,
    viscosity: float = 1.0,
    penalty: Optional[float] = None,
) -> HUMSolution:
    """HUM controls for the linearized system on the weight window, controlled in omega"""
    config = config or HUMConfig()
    grid = z0.grid
    n = config.time_steps
    solver = LinearizedSolver(grid, coefficients, n, weights.horizon / n, region=grid.omega,
                              viscosity=viscosity, config=solver_config)
    x0 = solver.layout.pack(z0.u, z0.v, h0.values)
    solution = hum_solve(solver, x0, penalty, config, weights.control_weights(n))
    states = controlled_trajectory(solver, x0, solution.controls)
    solution.trajectory = Trajectory([solver.to_state(x, t) for x, t in zip(states, solver.times())], viscosity)
    return solution
