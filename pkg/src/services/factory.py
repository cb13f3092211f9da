"""
Lab factory for creating and caching grids, coefficients, flows and weights
"""
import logging
from typing import Any, Dict, Optional

from .carleman.weights import CarlemanWeights, build_weights
from .config import LabConfig
from .exceptions import ConfigurationError
from .flushing.partition import FlushPartition, build_partition
from .flushing.reference import ReferenceFlow, build_reference_flow
from .geometry.boundary import BoundaryCoefficients, BoundaryNonlinearity
from .geometry.grid import Grid2D


logger = logging.getLogger(__name__)


class LabFactory:
    """Builds the shared objects of a run once per key"""

    def __init__(self, config: LabConfig):
        if config is None:
            raise ConfigurationError("Lab factory needs a configuration")
        self.config = config
        self._objects: Dict[str, Any] = {}

    def _cached(self, key: str, build):
        if key not in self._objects:
            logger.debug(f"Building {key}")
            self._objects[key] = build()
        return self._objects[key]

    def grid(self) -> Grid2D:
        return self._cached("grid", lambda: Grid2D.from_config(self.config.grid))

    def coefficients(self) -> BoundaryCoefficients:
        solver = self.config.solver
        return self._cached(
            "coefficients",
            lambda: BoundaryCoefficients.uniform(self.grid(), friction=solver.friction, heat=solver.heat_transfer),
        )

    def nonlinearity(self) -> BoundaryNonlinearity:
        hum = self.config.hum
        if hum.nonlinearity == "cubic":
            return BoundaryNonlinearity.cubic(hum.nonlinearity_strength)
        if hum.nonlinearity == "linear":
            return BoundaryNonlinearity.linear(hum.nonlinearity_strength, hum.nonlinearity_strength)
        if hum.nonlinearity == "none":
            return BoundaryNonlinearity.none()
        raise ConfigurationError(f"Unknown nonlinearity: {hum.nonlinearity}")

    def reference_flow(self, horizon: Optional[float] = None) -> ReferenceFlow:
        horizon = float(horizon or self.config.flushing.horizon)
        return self._cached(
            f"flow:{horizon:.12g}",
            lambda: build_reference_flow(
                self.grid(), horizon, self.config.flushing, solver_config=self.config.solver,
            ),
        )

    def partition(self, horizon: Optional[float] = None, reverse: bool = False) -> FlushPartition:
        flow = self.reference_flow(horizon)
        key = f"partition:{flow.horizon:.12g}:{'reverse' if reverse else 'forward'}"
        return self._cached(key, lambda: build_partition(flow.reversed() if reverse else flow, config=self.config.flushing))

    def weights(self, horizon: float) -> CarlemanWeights:
        return self._cached(f"weights:{horizon:.12g}", lambda: build_weights(self.grid(), horizon, self.config.carleman))

    def cleanup(self) -> None:
        """Drop every cached object"""
        count = len(self._objects)
        self._objects.clear()
        logger.info(f"Lab factory cache cleared | objects={count}")
