"""
Simulate and extend command handlers
"""
import asyncio
import logging

from cli.handlers.context import CommandContext
from services.extension import extend_state
from services.solver import BoussinesqSolver, energy_audit, mass_drift
from services.strategy import RunManifest, StepReport, initial_state

logger = logging.getLogger(__name__)


def run_simulation(ctx: CommandContext) -> RunManifest:
    """Free run of the configured initial data with the energy audit"""
    config = ctx.config
    grid = ctx.factory.grid()
    solver = BoussinesqSolver(grid, ctx.factory.coefficients(), config.solver, nonlinearity=ctx.factory.nonlinearity())
    start = initial_state(grid, config.strategy, ctx.seed)
    manifest = ctx.manifest("simulate", "grid", "solver", "strategy")

    trajectory = solver.run(start, config.solver.t_end)
    audit = energy_audit(trajectory)
    drift = mass_drift(trajectory)

    ctx.storage.write_trajectory("simulate", trajectory, ctx.write_fields)
    ctx.storage.write_series("simulate", "mass", trajectory.times, drift)
    norms = {k: float(v) for k, v in audit.summary().items()}
    norms["max_divergence"] = solver.max_divergence_residual
    report = manifest.add_step(StepReport(
        name="simulate", start=float(start.t), end=float(trajectory.final.t),
        initial_error=start.norm(), terminal_error=trajectory.final.norm(),
        passed=audit.passed, norms=norms,
        message="" if audit.passed else f"energy inequality violated {len(audit.violations)} times",
    ))
    manifest.terminal_error = report.terminal_error
    logger.info(
        f"{'✅' if audit.passed else '⚠️'} Simulation | t_end={config.solver.t_end:g} | "
        f"states={len(trajectory.states)} | max violation={audit.max_violation:.3e}"
    )
    return ctx.finish(manifest)


def run_extension(ctx: CommandContext) -> RunManifest:
    """Extend the configured initial data from the physical domain to the box"""
    config = ctx.config
    grid = ctx.factory.grid()
    start = initial_state(grid, config.strategy, ctx.seed)
    manifest = ctx.manifest("extend", "grid", "solver", "strategy")

    result = extend_state(start.u, start.theta, config.solver)
    if ctx.write_fields:
        ctx.storage.write_field("extend", "u", result.u)
        ctx.storage.write_field("extend", "theta", result.theta)
        ctx.storage.write_field("extend", "sigma", result.sigma)
    norms = {f"flux_{name}": float(value) for name, value in result.fluxes.items()}
    norms.update({
        "continuity": float(result.continuity),
        "divergence_residual": float(result.divergence_residual),
    })
    norms.update({k: float(v) for k, v in result.diagnostics.values.items()})
    report = manifest.add_step(StepReport(
        name="extend", start=0.0, end=0.0, initial_error=start.norm(),
        terminal_error=float((result.u.l2_norm() ** 2 + result.theta.l2_norm() ** 2) ** 0.5), norms=norms,
    ))
    manifest.terminal_error = report.terminal_error
    logger.info(
        f"✅ Extension | continuity={result.continuity:.2e} | divergence residual={result.divergence_residual:.2e}"
    )
    return ctx.finish(manifest)


async def simulate_handler(ctx: CommandContext) -> RunManifest:
    """Handle simulate command"""
    return await asyncio.to_thread(run_simulation, ctx)


async def extend_handler(ctx: CommandContext) -> RunManifest:
    """Handle extend command"""
    return await asyncio.to_thread(run_extension, ctx)
