"""
Four-step global control strategy
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..carleman.fixed_point import FixedPointResult, local_fixed_point, sobolev_proxy
from ..config import LabConfig
from ..exceptions import LabError, StepFailure
from ..extension.extend import extend_state
from ..factory import LabFactory
from ..geometry.grid import Grid2D
from ..solver.linearized import control_mask
from ..solver.navier import BoussinesqSolver
from ..solver.operators import Layout
from ..solver.state import FlowState, ForcingInputs, Trajectory
from .approximate import approximate_control
from .data import deviation, initial_state, relative_error, restarted, select_time, shifted, smooth_state, target_run
from .manifest import RunManifest, StepReport
from .traces import InterfaceTrace, extract_boundary_controls
from .windows import StepWindows, divergence_ramp, scan_window


logger = logging.getLogger(__name__)


@dataclass
class StrategyResult:
    """Manifest plus the controlled trajectory on O, the target and the traces on Gamma_c"""
    manifest: RunManifest
    trajectory: Trajectory
    target: Trajectory
    windows: Optional[StepWindows] = None
    traces: List[InterfaceTrace] = field(default_factory=list)
    local: Optional[FixedPointResult] = None

    @property
    def success(self) -> bool:
        return self.manifest.success


def hum_forcing(grid: Grid2D, controls: np.ndarray, dt: float) -> ForcingInputs:
    """Piecewise constant forcing from HUM controls c^n on the unknowns of omega"""
    layout = Layout(grid)
    index = np.flatnonzero(control_mask(layout, grid.omega))
    n = len(controls)

    def unpacked(t: float):
        step = min(max(int(np.floor(t / dt + 1e-9)), 0), n - 1)
        full = np.zeros(layout.size)
        full[index] = controls[step]
        return layout.unpack(full)

    def v(t: float):
        u, w, _ = unpacked(t)
        return u, w

    return ForcingInputs(v=v, w=lambda t: unpacked(t)[2])


class StrategyRunner:
    """Runs the regularize / approximate / settle / local / free sequence on [0, T]"""

    def __init__(self, config: LabConfig, factory: Optional[LabFactory] = None):
        self.config = config
        self.factory = factory or LabFactory(config)
        self.grid = self.factory.grid()
        self.coeffs = self.factory.coefficients()
        self.nonlinearity = self.factory.nonlinearity()
        self.settings = config.strategy
        self.solver = BoussinesqSolver(self.grid, self.coeffs, config.solver, epsilon=1.0,
                                       nonlinearity=self.nonlinearity)

    def _report(self, manifest: RunManifest, name: str, start: float, end: float, state: FlowState,
                target: Trajectory, **extra) -> StepReport:
        error, relative = relative_error(state, target)
        gap = deviation(state, target)
        report = StepReport(name=name, start=start, end=end, terminal_error=error, relative_error=relative,
                            proxy=sobolev_proxy(gap.u, gap.theta), **extra)
        logger.info(
            f"{'✅' if report.passed else '❌'} Step {name} | [{start:.4f}, {end:.4f}] | "
            f"error={error:.4e} | relative={relative:.3e} | proxy={report.proxy:.3e}"
        )
        return manifest.add_step(report)

    def free_run(self, state: FlowState, end: float, forcing: Optional[ForcingInputs] = None) -> Trajectory:
        return self.solver.run(state, end, forcing, dt=self.config.solver.dt, record_energy=False)

    def regularize(self, start: FlowState, horizon: float) -> Trajectory:
        """Extend the data to O and evolve freely while the divergence source ramps down"""
        extension = extend_state(start.u, start.theta, self.config.solver)
        sigma = np.asarray(extension.sigma.values)
        forcing = ForcingInputs(sigma=lambda t: divergence_ramp(t, horizon) * sigma)
        state = FlowState(0.0, extension.u, extension.theta)
        return self.solver.run(state, horizon / 8.0, forcing, dt=self.config.solver.dt, output_every=1,
                               record_energy=False)

    def local_step(self, state: FlowState, target: Trajectory, start: float, length: float,
                   delta: Optional[float]) -> Tuple[FixedPointResult, Trajectory]:
        """Fixed-point control on [start, start + length] re-simulated with the nonlinear solver"""
        weights = self.factory.weights(length)
        local = local_fixed_point(
            restarted(state, 0.0), self.coeffs, self.nonlinearity, weights,
            reference=shifted(target, start), config=self.config.hum, solver_config=self.config.solver,
            delta=delta,
        )
        forcing = hum_forcing(self.grid, local.solution.controls, length / self.config.hum.time_steps)
        run = self.free_run(restarted(state, 0.0), length, forcing)
        return local, shifted(run, -start)

    def run(self, target: Optional[Trajectory] = None, initial: Optional[FlowState] = None,
            seed: Optional[int] = None) -> StrategyResult:
        settings = self.settings
        T = settings.horizon
        delta = settings.delta
        manifest = RunManifest(command="strategy", seed=settings.seed if seed is None else seed,
                               config={"strategy": vars(settings).copy()})
        target = target or target_run(self.grid, self.coeffs, settings, self.config.solver, self.nonlinearity)
        start = initial or initial_state(self.grid, settings, seed)
        logger.info(f"🚀 Strategy | T={T:g} | eps={settings.epsilon:g} | delta={delta:g} | grid={self.grid.nx}x{self.grid.ny}")

        trajectory = Trajectory([restarted(start, 0.0)])
        windows = local = None
        try:
            # regularize
            first = self.regularize(start, T)
            t1, proxy1 = select_time(first, scan_window(T, "t1"), samples=settings.proxy_samples)
            state = first.at(t1)
            trajectory = Trajectory([s for s in first.states if s.t <= t1 + 1e-12], diagnostics=first.diagnostics)
            self._report(manifest, "regularize", 0.0, t1, state, target, norms={"proxy_at_t1": proxy1})

            # approximate
            gap = deviation(state, target)
            if sobolev_proxy(gap.u, gap.theta) <= delta:
                logger.info("Data already within delta of the target, approximate step skipped")
                leg = self.free_run(state, T / 2.0)
                manifest.add_step(StepReport(name="approximate", start=t1, end=T / 2.0, skipped=True,
                                             terminal_error=relative_error(leg.final, target)[0],
                                             message="within delta at T1"))
            else:
                outcome = approximate_control(state, target, T / 2.0, settings.epsilon, self.config, self.factory)
                leg = outcome.trajectory
                report = self._report(manifest, "approximate", t1, T / 2.0, leg.final, target,
                                      norms=dict(outcome.diagnostics.values))
                if report.terminal_error > delta:
                    report.passed = False
                    report.message = f"tracking error {report.terminal_error:.3e} above delta {delta:.3e}"
                    manifest.failed_step = manifest.failed_step or report.name
            trajectory = trajectory.extend(leg)

            # settle
            settle = self.free_run(trajectory.final, scan_window(T, "t3")[1])
            t3, proxy3 = select_time(settle, scan_window(T, "t3"), target, settings.proxy_samples)
            windows = StepWindows(T, t1, t3)
            state = settle.at(t3)
            trajectory = trajectory.extend(Trajectory([s for s in settle.states if s.t <= t3 + 1e-12]))
            self._report(manifest, "settle", T / 2.0, t3, state, target, norms={"proxy_at_t3": proxy3})

            # local
            local, leg = self.local_step(state, target, t3, T / 4.0, delta)
            trajectory = trajectory.extend(leg)
            linear_error = local.terminal_norm
            report = self._report(manifest, "local", t3, windows.t4, leg.final, target,
                                  initial_error=local.trajectory.diagnostics.values.get("initial_distance"),
                                  norms={"linear_terminal": linear_error, "iterations": float(local.iterations)})
            if not local.converged:
                report.passed = False
                report.message = "fixed point did not converge"
                manifest.failed_step = manifest.failed_step or report.name

            # free
            leg = self.free_run(trajectory.final, T)
            trajectory = trajectory.extend(leg)
            report = self._report(manifest, "free", windows.t4, T, trajectory.final, target)
            manifest.terminal_error = report.terminal_error
            manifest.relative_error = report.relative_error
            if report.relative_error > settings.tolerance:
                report.passed = False
                report.message = f"relative error {report.relative_error:.3e} above {settings.tolerance:.1e}"
                manifest.failed_step = manifest.failed_step or report.name
        except LabError as e:
            name = ("regularize", "approximate", "settle", "local", "free")[min(len(manifest.steps), 4)]
            logger.error(f"❌ Step {name} failed: {e.message}")
            manifest.add_step(StepReport(name=name, start=float(trajectory.final.t), end=T, passed=False,
                                         message=e.message, norms={k: v for k, v in e.details.items()
                                                                   if isinstance(v, (int, float))}))

        manifest.success = manifest.failed_step is None
        if windows is not None:
            manifest.times = windows.as_dict()
        traces = extract_boundary_controls(trajectory, self.coeffs)
        status = "✅" if manifest.success else "❌"
        logger.info(f"{status} Strategy finished | terminal={manifest.terminal_error} | failed={manifest.failed_step}")
        return StrategyResult(manifest, trajectory, target, windows, traces, local)


def run_strategy(config: LabConfig, factory: Optional[LabFactory] = None, target: Optional[Trajectory] = None,
                 initial: Optional[FlowState] = None, seed: Optional[int] = None) -> StrategyResult:
    return StrategyRunner(config, factory).run(target=target, initial=initial, seed=seed)


def calibrate_delta(config: LabConfig, factory: Optional[LabFactory] = None,
                    amplitudes: Sequence[float] = (1e-3, 1e-2, 1e-1, 1.0)) -> float:
    """Half of the largest Sobolev distance from rest for which the local step converges"""
    factory = factory or LabFactory(config)
    grid = factory.grid()
    weights = factory.weights(config.strategy.horizon / 4.0)
    reached = 0.0
    for amplitude in sorted(amplitudes):
        state = smooth_state(grid, amplitude, config.strategy.modes)
        distance = sobolev_proxy(state.u, state.theta)
        try:
            result = local_fixed_point(state, factory.coefficients(), factory.nonlinearity(), weights,
                                       config=config.hum, solver_config=config.solver)
        except LabError as e:
            logger.info(f"Calibration stops at amplitude {amplitude:g}: {e.message}")
            break
        if not result.converged:
            break
        reached = max(reached, distance)
    if reached == 0.0:
        raise StepFailure("Local step did not converge for any calibration amplitude", step="local")
    logger.info(f"✅ Calibrated delta={0.5 * reached:.4e} | largest converged distance={reached:.4e}")
    return 0.5 * reached
