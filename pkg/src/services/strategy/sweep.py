"""
Epsilon sweeps of the tracking error and of remainder norms
"""
import asyncio
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from ..base import ExpansionMode
from ..config import LabConfig
from ..exceptions import LabError
from ..expansion.bundle import ExpansionBundle
from ..expansion.rates import RateFit, claimed_rate, rate_fit
from ..expansion.remainder import remainder_norms
from ..factory import LabFactory
from ..flushing.transport import exact_transport_control
from ..layer.driver import reference_schedules, solve_boundary_layers
from ..solver.state import FlowState, Trajectory
from .approximate import approximate_control
from .data import initial_state, zero_state


logger = logging.getLogger(__name__)

Runner = Callable[[float], Dict[str, float]]


@dataclass
class SweepRow:
    epsilon: float
    norms: Dict[str, float] = field(default_factory=dict)
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class SweepResult:
    rows: List[SweepRow]
    fits: Dict[str, RateFit] = field(default_factory=dict)

    @property
    def failures(self) -> List[SweepRow]:
        return [row for row in self.rows if not row.ok]

    def rate_rows(self) -> List[Dict[str, object]]:
        """One row per (eps, quantity) plus one per fitted quantity"""
        out: List[Dict[str, object]] = []
        for row in self.rows:
            if not row.ok:
                out.append({"epsilon": row.epsilon, "quantity": "error", "value": None, "note": row.error})
                continue
            for name, value in row.norms.items():
                out.append({"epsilon": row.epsilon, "quantity": name, "value": value, "note": ""})
        for name, fit in self.fits.items():
            out.append({"epsilon": None, "quantity": f"{name}_slope", "value": fit.slope,
                        "note": f"claimed={fit.claimed}"})
        return out


async def sweep_epsilon(
    epsilons: Sequence[float],
    runner: Runner,
    claimed: Optional[Dict[str, float]] = None,
    workers: int = 2,
) -> SweepResult:
    """Run ``runner`` for every eps in worker threads and fit log-log slopes

    A failing eps is recorded and the sweep goes on. Slopes are fitted per
    quantity once three or more eps values succeeded.
    """
    claimed = claimed or {}
    gate = asyncio.Semaphore(max(int(workers), 1))

    async def one(eps: float) -> SweepRow:
        async with gate:
            try:
                norms = await asyncio.to_thread(runner, float(eps))
                logger.info(f"✅ Sweep eps={eps:g} | " + " | ".join(f"{k}={v:.4e}" for k, v in norms.items()))
                return SweepRow(float(eps), {k: float(v) for k, v in norms.items()})
            except (LabError, ArithmeticError, ValueError, np.linalg.LinAlgError) as e:
                logger.error(f"❌ Sweep eps={eps:g} failed: {e}")
                return SweepRow(float(eps), error=str(e))

    rows = list(await asyncio.gather(*(one(eps) for eps in epsilons)))
    result = SweepResult(rows)

    good = [row for row in rows if row.ok]
    if len(good) < 3:
        logger.warning(f"⚠️ Sweep has {len(good)} successful eps values, no rates fitted")
        return result
    for name in sorted(set().union(*(row.norms for row in good))):
        samples = [(row.epsilon, row.norms[name]) for row in good if name in row.norms and row.norms[name] > 0.0]
        if len(samples) < 3:
            continue
        eps, values = zip(*samples)
        try:
            result.fits[name] = rate_fit(eps, values, claimed.get(name))
        except LabError as e:
            logger.warning(f"⚠️ No rate for {name}: {e}")
    return result


def tracking_runner(config: LabConfig, state: FlowState, target: Trajectory, end: float,
                    factory: Optional[LabFactory] = None) -> Runner:
    """eps -> tracking error at ``end`` of the approximate control started from ``state``"""
    factory = factory or LabFactory(config)

    def run(eps: float) -> Dict[str, float]:
        outcome = approximate_control(state, target, end, eps, config, factory)
        return {"final_error": outcome.error}

    return run


def remainder_runner(config: LabConfig, factory: Optional[LabFactory] = None) -> Runner:
    """eps -> sup of |r|^2 + |q|^2 for the null-control expansion of the configured mode, plus the nonlinear cross-check"""
    factory = factory or LabFactory(config)
    mode = ExpansionMode(config.expansion.mode)
    grid = factory.grid()
    coeffs = factory.coefficients()
    flush = config.flushing.horizon
    horizon = flush if mode == ExpansionMode.SLIP else flush / config.layer.dissipation_window[0]
    start = initial_state(grid, config.strategy)
    flow = factory.reference_flow(flush)
    transport = exact_transport_control(
        flow, factory.partition(flush), factory.partition(flush, reverse=True),
        (start.u, start.theta), (zero_state(grid).u, zero_state(grid).theta),
        config=config.flushing, solver_config=config.solver,
    )
    schedules = reference_schedules(flow, coeffs)
    layers = None
    if mode != ExpansionMode.SLIP:
        layers = solve_boundary_layers(schedules, grid, horizon, config.expansion.dt, config.layer,
                                       workers=config.strategy.workers)

    def run(eps: float) -> Dict[str, float]:
        bundle = ExpansionBundle(mode, eps, coeffs, flow=flow, transport=transport, layers=layers,
                                 schedules=schedules, poisson_tol=config.solver.poisson_tol)
        return remainder_norms(bundle, horizon, config.expansion.dt, config.solver, check=config.expansion.cross_check)

    return run


def claimed_rates(config: LabConfig) -> Dict[str, float]:
    rates = config.expansion.claimed_rates
    out = {"final_error": rates.get("final_error")}
    remainder = claimed_rate(config.expansion.mode, rates)
    if remainder is not None:
        out["remainder"] = remainder
    return {k: v for k, v in out.items() if v is not None}
