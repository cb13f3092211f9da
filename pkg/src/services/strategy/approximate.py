"""
Approximate tracking control: flushing, boundary layers and the eps expansion
"""
import logging
from dataclasses import dataclass, field
from typing import Optional

from ..base import Diagnostics, Direction, ExpansionMode
from ..config import LabConfig
from ..exceptions import ValidationError
from ..expansion.bundle import ExpansionBundle
from ..expansion.remainder import expansion_controls
from ..expansion.scaling import scale_state, scale_trajectory
from ..factory import LabFactory
from ..flushing.transport import exact_transport_control
from ..layer.driver import reference_schedules, solve_boundary_layers
from ..solver.navier import BoussinesqSolver
from ..solver.state import FlowState, Trajectory
from .data import relative_error, restarted, shifted


logger = logging.getLogger(__name__)


@dataclass
class ApproximateRun:
    """Controlled run of the original system on [start, end] and its tracking error at end"""
    trajectory: Trajectory
    epsilon: float
    error: float
    relative: float
    diagnostics: Diagnostics = field(default_factory=Diagnostics)

    @property
    def final(self) -> FlowState:
        return self.trajectory.final


def approximate_control(
    state: FlowState,
    target: Trajectory,
    end: float,
    epsilon: float,
    config: LabConfig,
    factory: Optional[LabFactory] = None,
) -> ApproximateRun:
    """Steer state (at time state.t) close to the target at time end

    In the scaled time t' = (t - start) / eps the flushing flow carries the
    exact transport control towards the target on [0, T_f]; afterwards the
    eps-system follows eps u_bar(eps t') and only the layer dissipation
    controls act. The run is mapped back to original variables.
    """
    factory = factory or LabFactory(config)
    grid = factory.grid()
    coeffs = factory.coefficients()
    start = float(state.t)
    span = (end - start) / epsilon
    flush = config.flushing.horizon
    window = config.layer.dissipation_window
    if flush > window[0] * span:
        raise ValidationError(
            f"Flushing horizon {flush:g} does not end before the layer dissipation window of the scaled span {span:.3f}",
            details={"flush": flush, "span": span, "epsilon": epsilon},
        )
    diagnostics = Diagnostics()
    local_target = shifted(target, start)

    flow = factory.reference_flow(flush)
    partition = factory.partition(flush)
    reverse = factory.partition(flush, reverse=True)
    goal = local_target.at(epsilon * flush)
    transport = exact_transport_control(
        flow, partition, reverse, (state.u, state.theta), (goal.u, goal.theta),
        config=config.flushing, solver_config=config.solver,
    )
    schedules = reference_schedules(flow, coeffs)
    layers = solve_boundary_layers(schedules, grid, span, config.strategy.scaled_dt, config.layer,
                                   workers=config.strategy.workers)

    phase_one = ExpansionBundle(
        ExpansionMode.TRACKING_1, epsilon, coeffs, flow=flow, transport=transport, layers=layers,
        schedules=schedules, target=local_target, poisson_tol=config.solver.poisson_tol,
    )
    phase_two = ExpansionBundle(
        ExpansionMode.TRACKING_2, epsilon, coeffs, layers=layers, schedules=schedules, target=local_target,
        poisson_tol=config.solver.poisson_tol,
    )

    solver = BoussinesqSolver(grid, coeffs, config.solver, epsilon=epsilon, nonlinearity=factory.nonlinearity())
    scaled0 = scale_state(restarted(state, 0.0), epsilon)
    dt = config.strategy.scaled_dt
    first = solver.run(scaled0, flush, expansion_controls(phase_one, diagnostics), dt=dt, record_energy=False)
    second = solver.run(first.final, span, expansion_controls(phase_two, diagnostics), dt=dt, record_energy=False)
    scaled = first.extend(second)

    original = shifted(scale_trajectory(scaled, epsilon, Direction.BACKWARD), -start)
    for name, value in scaled.diagnostics.values.items():
        diagnostics.record(name, value)
    error, relative = relative_error(original.final, target)
    diagnostics.record("tracking_error", error)
    status = "✅" if error <= config.strategy.delta else "⚠️"
    logger.info(
        f"{status} Approximate control | eps={epsilon:g} | span={span:.2f} | error={error:.4e} | relative={relative:.3e}"
    )
    return ApproximateRun(original, epsilon, error, relative, diagnostics)
