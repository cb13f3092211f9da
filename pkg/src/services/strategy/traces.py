"""
Boundary controls of the physical problem read off an extended-domain trajectory
"""
import logging
from dataclasses import dataclass
from typing import Dict, List

import numpy as np

from ..base import Side
from ..geometry.boundary import BoundaryCoefficients, navier_traces, robin_traces, wall_normal_derivative, wall_trace
from ..solver.state import FlowState, Trajectory


logger = logging.getLogger(__name__)

INTERFACE = Side.RIGHT


@dataclass
class InterfaceTrace:
    """(u, theta) and N(u), R(theta) on Gamma_c at one output time; arrays are indexed by the ny faces"""
    t: float
    y: np.ndarray
    u: np.ndarray
    v: np.ndarray
    theta: np.ndarray
    navier: np.ndarray
    robin: np.ndarray

    def rows(self) -> List[Dict[str, float]]:
        return [
            {"t": self.t, "face": j, "y": float(self.y[j]), "u": float(self.u[j]), "v": float(self.v[j]),
             "theta": float(self.theta[j]), "navier": float(self.navier[j]), "robin": float(self.robin[j])}
            for j in range(len(self.y))
        ]


def interface_trace(state: FlowState, coeffs: BoundaryCoefficients) -> InterfaceTrace:
    """One-sided traces from the physical columns; the outward normal of Omega on Gamma_c is +x"""
    grid = state.grid
    i0 = grid.nx_omega
    cx, cy = state.u.cell_vectors()
    cx, cy = cx[:i0], cy[:i0]
    theta = np.asarray(state.theta.values)[:i0]

    # u . nu is the face value itself; the tangential component is extrapolated
    u_n = np.asarray(state.u.u)[i0]
    u_t = wall_trace(cy, INTERFACE)
    dv_dx = wall_normal_derivative(cy, INTERFACE, grid.hx)
    du_dy = wall_trace(np.gradient(cx, grid.hy, axis=1, edge_order=2), INTERFACE)
    friction = coeffs.tangential_friction(INTERFACE)
    navier = 0.5 * (dv_dx + du_dy) + friction * u_t

    theta_wall = wall_trace(theta, INTERFACE)
    robin = wall_normal_derivative(theta, INTERFACE, grid.hx) + coeffs.heat[INTERFACE] * theta_wall
    return InterfaceTrace(float(state.t), grid.y_centers, u_n, u_t, theta_wall, navier, robin)


def extract_boundary_controls(trajectory: Trajectory, coeffs: BoundaryCoefficients) -> List[InterfaceTrace]:
    """Traces on (0, T) x Gamma_c at every output time: the boundary controls of the physical problem"""
    traces = [interface_trace(state, coeffs) for state in trajectory.states]
    peak = max((float(np.max(np.abs(t.navier))) for t in traces), default=0.0)
    logger.info(f"Boundary controls extracted | times={len(traces)} | faces={trajectory.grid.ny} | max |N(u)|={peak:.3e}")
    return traces


def trace_rows(traces: List[InterfaceTrace]) -> List[Dict[str, float]]:
    return [row for trace in traces for row in trace.rows()]


def physical_wall_residuals(state: FlowState, coeffs: BoundaryCoefficients) -> Dict[str, float]:
    """Largest N(u), R(theta) and u . nu on Gamma minus Gamma_c, relative to the gradient scale of the state"""
    grid = state.grid
    i0 = grid.nx_omega
    navier = navier_traces(state.u, coeffs)
    robin = robin_traces(state.theta, coeffs)
    cuts = {Side.LEFT: slice(None), Side.BOTTOM: slice(0, i0), Side.TOP: slice(0, i0)}
    n_max = max(float(np.max(np.abs(navier[side].operator[cut]))) for side, cut in cuts.items())
    r_max = max(float(np.max(np.abs(robin[side].operator[cut]))) for side, cut in cuts.items())
    flux = max(
        float(np.max(np.abs(state.u.u[0]))),
        float(np.max(np.abs(state.u.v[:i0, 0]))),
        float(np.max(np.abs(state.u.v[:i0, -1]))),
    )

    cx, cy = state.u.cell_vectors()
    theta = np.asarray(state.theta.values)
    u_scale = max(float(np.max(np.abs(np.gradient(c, grid.hx, grid.hy)))) for c in (cx, cy))
    t_scale = max(float(np.max(np.abs(np.gradient(theta, grid.hx, grid.hy)))), float(np.max(np.abs(theta))))
    return {
        "navier": n_max,
        "robin": r_max,
        "normal_flux": flux,
        "navier_relative": n_max / u_scale if u_scale > 0.0 else n_max,
        "robin_relative": r_max / t_scale if t_scale > 0.0 else r_max,
    }
