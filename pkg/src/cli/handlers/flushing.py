"""
Flush and layer command handlers
"""
import asyncio
import logging

import numpy as np

from cli.handlers.context import CommandContext
from services.exceptions import LabError
from services.flushing import transport_control, verify_flushing
from services.geometry import Field
from services.layer import decay_timeline, measure_decay, reference_schedules, solve_boundary_layers
from services.strategy import RunManifest, StepReport, initial_state

logger = logging.getLogger(__name__)

DECAY_DURATION = 1000.0


def _ratio(final: float, start: float) -> float:
    return final / start if start > 0.0 else 0.0


def run_flushing(ctx: CommandContext) -> RunManifest:
    """Reference flow, exit times of the physical cells and the transport null control"""
    config = ctx.config
    grid = ctx.factory.grid()
    horizon = config.flushing.horizon
    manifest = ctx.manifest("flush", "grid", "flushing", "strategy")

    flow = ctx.factory.reference_flow(horizon)
    report = verify_flushing(flow, config=config.flushing)
    ctx.storage.write_array("flush", "exit_times", grid, report.exit_field(grid))
    manifest.add_step(StepReport(
        name="flushing", start=0.0, end=horizon, terminal_error=report.max_exit_time,
        passed=report.passed, norms=dict(report.diagnostics.values),
        message="" if report.passed else f"{1.0 - report.exit_fraction:.1%} of the seeds stay in the domain",
    ))

    start = initial_state(grid, config.strategy, ctx.seed)
    controls = transport_control(flow, ctx.factory.partition(horizon), start.u, start.theta,
                                 config=config.flushing, solver_config=config.solver)
    theta_norms = np.sqrt(np.sum(controls.theta ** 2, axis=(1, 2)) * grid.cell_area)
    velocity_norms = np.array([Field.vector(grid, u, v).l2_norm() for u, v in zip(controls.u, controls.v)])
    ctx.storage.write_series("flush", "theta_norms", controls.times, theta_norms)
    ctx.storage.write_series("flush", "velocity_norms", controls.times, velocity_norms)
    theta_ratio = _ratio(theta_norms[-1], start.theta.l2_norm())
    velocity_ratio = _ratio(velocity_norms[-1], start.u.l2_norm())
    norms = {"theta_ratio": theta_ratio, "velocity_ratio": velocity_ratio}
    norms.update(controls.diagnostics.values)
    transport = manifest.add_step(StepReport(
        name="transport", start=0.0, end=horizon, initial_error=start.norm(),
        terminal_error=float(np.hypot(theta_norms[-1], velocity_norms[-1])), norms=norms,
    ))
    manifest.terminal_error = transport.terminal_error
    logger.info(
        f"{'✅' if report.passed else '❌'} Flushing | exit fraction={report.exit_fraction:.3f} | "
        f"max exit={report.max_exit_time:.4f} | theta ratio={theta_ratio:.2e} | velocity ratio={velocity_ratio:.2e}"
    )
    return ctx.finish(manifest)


def run_layers(ctx: CommandContext) -> RunManifest:
    """Boundary layers driven by the reference flow, then their free decay after the horizon"""
    config = ctx.config
    grid = ctx.factory.grid()
    horizon = config.flushing.horizon
    manifest = ctx.manifest("layer", "grid", "flushing", "layer")

    flow = ctx.factory.reference_flow(horizon)
    schedules = reference_schedules(flow, ctx.factory.coefficients())
    histories = solve_boundary_layers(schedules, grid, horizon, config.strategy.scaled_dt, config.layer,
                                      workers=config.strategy.workers)

    decay_rows = []
    for side, history in histories.items():
        norms = history.norms()
        ctx.storage.write_series("layer", f"norms_{side.value}", history.times, norms)
        step = StepReport(name=f"layer_{side.value}", start=0.0, end=horizon, terminal_error=float(norms[-1]),
                          norms=dict(history.diagnostics.values))
        if float(norms[-1]) > 0.0:
            try:
                fit = measure_decay(decay_timeline(history.final, DECAY_DURATION), k=config.layer.moments)
            except LabError as e:
                step.passed = False
                step.message = e.message
            else:
                step.norms.update({"decay_exponent": fit.exponent, "decay_target": fit.target,
                                   "decay_residual": fit.residual})
                decay_rows.append({"side": side.value, "exponent": fit.exponent, "target": fit.target,
                                   "residual": fit.residual, "span_decades": fit.span_decades})
        manifest.add_step(step)

    ctx.storage.write_rows("layer", "decay", decay_rows,
                           headers=["side", "exponent", "target", "residual", "span_decades"])
    finals = [s.terminal_error for s in manifest.steps]
    manifest.terminal_error = max(finals) if finals else 0.0
    logger.info(f"✅ Layers | sides={len(histories)} | fits={len(decay_rows)} | largest final={manifest.terminal_error:.3e}")
    return ctx.finish(manifest)


async def flush_handler(ctx: CommandContext) -> RunManifest:
    """Handle flush command"""
    return await asyncio.to_thread(run_flushing, ctx)


async def layer_handler(ctx: CommandContext) -> RunManifest:
    """Handle layer command"""
    return await asyncio.to_thread(run_layers, ctx)
