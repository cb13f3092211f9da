"""
HUM, strategy and sweep command handlers
"""
import asyncio
import logging
from typing import Dict

from cli.handlers.context import CommandContext
from services.base import ExpansionMode
from services.carleman import carleman_quotient, hum_control, local_fixed_point
from services.solver import LinearCoefficients, LinearizedSolver
from services.strategy import (
    RunManifest,
    StepReport,
    StrategyRunner,
    claimed_rates,
    initial_state,
    physical_wall_residuals,
    remainder_runner,
    run_strategy,
    scan_window,
    select_time,
    sweep_epsilon,
    target_run,
    trace_rows,
    tracking_runner,
)
from services.strategy.sweep import Runner

logger = logging.getLogger(__name__)


def run_hum(ctx: CommandContext) -> RunManifest:
    """Linear HUM control on the local window, the Carleman quotient and (if configured) the fixed point"""
    config = ctx.config
    grid = ctx.factory.grid()
    coeffs = ctx.factory.coefficients()
    length = config.strategy.horizon / 4.0
    weights = ctx.factory.weights(length)
    start = initial_state(grid, config.strategy, ctx.seed)
    manifest = ctx.manifest("hum", "grid", "carleman", "hum", "strategy")

    solution = hum_control(start.u, start.theta, LinearCoefficients(boundary=coeffs), weights, config.hum, config.solver)
    ctx.storage.write_hum_iterations("hum", solution.iterations)
    if solution.trajectory is not None:
        ctx.storage.write_trajectory("hum", solution.trajectory, ctx.write_fields)
    manifest.add_step(StepReport(
        name="hum", start=0.0, end=length, initial_error=solution.initial_norm,
        terminal_error=solution.terminal_norm, passed=solution.converged,
        norms={"reduction": solution.reduction, "cost": solution.cost, "kappa_norm": solution.kappa_norm,
               "optimality_residual": solution.optimality_residual,
               "iterations": float(len(solution.iterations))},
        message="" if solution.converged else "conjugate gradient stopped before its tolerance",
    ))
    manifest.terminal_error = solution.terminal_norm

    n = config.hum.time_steps
    adjoint = LinearizedSolver(grid, LinearCoefficients(boundary=coeffs), n, length / n, region=grid.omega,
                               config=config.solver)
    quotient = carleman_quotient(weights, adjoint, samples=config.carleman.quotient_samples,
                                 seed=ctx.effective_seed)
    manifest.add_step(StepReport(
        name="quotient", start=0.0, end=length, terminal_error=quotient.max_quotient,
        skipped=quotient.max_quotient is None,
        norms={"runs": float(len(quotient.quotients)), "skipped": float(quotient.skipped)},
    ))

    nonlinearity = ctx.factory.nonlinearity()
    if not nonlinearity.is_zero():
        local = local_fixed_point(start, coeffs, nonlinearity, weights, config=config.hum,
                                  solver_config=config.solver, delta=config.strategy.delta)
        ctx.storage.write_rows("hum", "fixed_point", [
            {"iteration": k + 1, "distance": d, "terminal_norm": norm}
            for k, (d, norm) in enumerate(zip(local.distances, local.terminal_norms))
        ], headers=["iteration", "distance", "terminal_norm"])
        manifest.add_step(StepReport(
            name="fixed_point", start=0.0, end=length, initial_error=start.norm(),
            terminal_error=local.terminal_norm, passed=local.converged,
            norms={"iterations": float(local.iterations)},
            message="" if local.converged else "fixed point did not converge",
        ))
        manifest.terminal_error = local.terminal_norm

    logger.info(
        f"{'✅' if solution.converged else '❌'} HUM | reduction={solution.reduction:.3e} | "
        f"iterations={len(solution.iterations)} | quotient={quotient.max_quotient}"
    )
    return ctx.finish(manifest)


def run_strategy_command(ctx: CommandContext) -> RunManifest:
    """Four-step strategy with traces on the controlled interface"""
    config = ctx.config
    result = run_strategy(config, ctx.factory, seed=ctx.seed)
    manifest = result.manifest
    ctx.storage.write_traces("strategy", trace_rows(result.traces))
    ctx.storage.write_trajectory("strategy", result.trajectory, ctx.write_fields)
    ctx.storage.write_series("strategy", "target_norms", result.target.times, result.target.norms())

    residuals = physical_wall_residuals(result.trajectory.final, ctx.factory.coefficients())
    if manifest.steps:
        manifest.steps[-1].norms.update({f"wall_{k}": float(v) for k, v in residuals.items()})
    return ctx.finish(manifest)


def build_sweep_runner(ctx: CommandContext) -> Runner:
    """Tracking error at T/2 from the regularized data, plus the remainder norm for slip and friction"""
    config = ctx.config
    factory = ctx.factory
    grid = factory.grid()
    horizon = config.strategy.horizon

    strategy = StrategyRunner(config, factory)
    first = strategy.regularize(initial_state(grid, config.strategy, ctx.seed), horizon)
    t1, _ = select_time(first, scan_window(horizon, "t1"), samples=config.strategy.proxy_samples)
    target = target_run(grid, factory.coefficients(), config.strategy, config.solver, factory.nonlinearity())
    tracking = tracking_runner(config, first.at(t1), target, horizon / 2.0, factory)

    remainder = None
    if ExpansionMode(config.expansion.mode) in (ExpansionMode.SLIP, ExpansionMode.FRICTION):
        remainder = remainder_runner(config, factory)

    def run(eps: float) -> Dict[str, float]:
        norms = tracking(eps)
        if remainder is not None:
            norms.update(remainder(eps))
        return norms

    return run


async def sweep_handler(ctx: CommandContext) -> RunManifest:
    """Handle sweep command"""
    config = ctx.config
    epsilons = ctx.epsilons or config.expansion.epsilons
    manifest = ctx.manifest("sweep", "grid", "expansion", "layer", "strategy")
    runner = await asyncio.to_thread(build_sweep_runner, ctx)
    result = await sweep_epsilon(epsilons, runner, claimed_rates(config), workers=config.strategy.workers)

    ctx.storage.write_rates("sweep", result.rate_rows())
    manifest.rates = [{"quantity": name, **fit.to_dict()} for name, fit in result.fits.items()]
    for row in result.rows:
        manifest.add_step(StepReport(
            name=f"eps={row.epsilon:g}", start=0.0, end=config.strategy.horizon / 2.0,
            terminal_error=row.norms.get("final_error"), passed=row.ok, norms=row.norms,
            message=row.error or "",
        ))
    missed = [name for name, fit in result.fits.items() if fit.meets_claim is False]
    if missed:
        manifest.failed_step = manifest.failed_step or f"rate:{missed[0]}"
    good = [row.norms["final_error"] for row in result.rows if row.ok and "final_error" in row.norms]
    manifest.terminal_error = min(good) if good else None
    logger.info(f"{'✅' if not missed else '⚠️'} Sweep | eps={len(epsilons)} | failures={len(result.failures)} | "
                f"fits={sorted(result.fits)}")
    return ctx.finish(manifest)


async def hum_handler(ctx: CommandContext) -> RunManifest:
    """Handle hum command"""
    return await asyncio.to_thread(run_hum, ctx)


async def strategy_handler(ctx: CommandContext) -> RunManifest:
    """Handle strategy command"""
    return await asyncio.to_thread(run_strategy_command, ctx)
