"""
Global control strategy: step windows, approximate tracking, local control, sweeps and traces
"""
from .approximate import ApproximateRun, approximate_control
from .data import initial_state, relative_error, select_time, shifted, smooth_state, target_run, zero_state
from .manifest import RunManifest, StepReport
from .pipeline import StrategyResult, StrategyRunner, calibrate_delta, hum_forcing, run_strategy
from .sweep import SweepResult, SweepRow, claimed_rates, remainder_runner, sweep_epsilon, tracking_runner
from .traces import InterfaceTrace, extract_boundary_controls, interface_trace, physical_wall_residuals, trace_rows
from .windows import StepWindows, divergence_ramp, scan_window

__all__ = [
    "ApproximateRun",
    "InterfaceTrace",
    "RunManifest",
    "StepReport",
    "StepWindows",
    "StrategyResult",
    "StrategyRunner",
    "SweepResult",
    "SweepRow",
    "approximate_control",
    "calibrate_delta",
    "claimed_rates",
    "divergence_ramp",
    "extract_boundary_controls",
    "hum_forcing",
    "initial_state",
    "interface_trace",
    "physical_wall_residuals",
    "relative_error",
    "remainder_runner",
    "run_strategy",
    "scan_window",
    "select_time",
    "shifted",
    "smooth_state",
    "sweep_epsilon",
    "target_run",
    "trace_rows",
    "tracking_runner",
    "zero_state",
]
