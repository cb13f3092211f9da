"""
Configuration management for the control lab
"""
import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic_settings import BaseSettings, SettingsConfigDict

from .exceptions import ConfigurationError, ValidationError


logger = logging.getLogger(__name__)


@dataclass
class GridConfig:
    """Computational box and control region"""
    nx: int = 32
    ny: int = 32
    lx: float = 1.5
    ly: float = 1.0
    physical_fraction: float = 2.0 / 3.0  # share of columns belonging to the physical domain
    control_region: List[float] = None  # [x0, x1, y0, y1]
    collar_rows: int = 3

    def __post_init__(self):
        if self.control_region is None:
            x_gamma = round(self.nx * self.physical_fraction) * self.lx / self.nx
            width = self.lx - x_gamma
            self.control_region = [
                x_gamma + 0.15 * width,
                self.lx - 0.15 * width,
                0.25 * self.ly,
                0.75 * self.ly,
            ]


@dataclass
class SolverConfig:
    """Boussinesq time marching"""
    epsilon: float = 1.0
    dt: float = 1e-3
    t_end: float = 0.1
    cfl: float = 0.5
    max_retries: int = 8
    poisson_tol: float = 1e-10
    poisson_maxiter: int = 200
    friction: float = 0.5
    heat_transfer: float = 0.5
    advection: bool = True
    buoyancy: bool = True
    output_every: int = 10


@dataclass
class FlushingConfig:
    """Reference flow, ball partition and transport"""
    horizon: float = 1.0
    amplitude_support: List[float] = None  # fractions of the horizon
    amplitude_safety: float = 1.2
    source_offset: float = 0.2  # source/sink distance from the walls, fraction of ly
    source_radius: float = None
    ball_radius: float = None
    square_overlap: float = 0.2
    n_scan: int = 400
    n_transport_steps: int = 200
    workers: int = 4

    def __post_init__(self):
        if self.amplitude_support is None:
            self.amplitude_support = [0.05, 0.75]


@dataclass
class LayerConfig:
    """Half-line boundary layer"""
    nz: int = 128
    z_max: float = 40.0
    first_step: float = 0.01
    moments: int = 2
    dissipation_window: List[float] = None  # fractions of the horizon
    mode_support: float = 8.0
    cfl: float = 0.5
    control_all_collar: bool = False

    def __post_init__(self):
        if self.dissipation_window is None:
            self.dissipation_window = [0.8, 0.95]


@dataclass
class ExpansionConfig:
    """Asymptotic expansion and remainder"""
    mode: str = "friction"
    epsilons: List[float] = None
    dt: float = 5e-3
    claimed_rates: Dict[str, float] = None
    cross_check: bool = True

    def __post_init__(self):
        if self.epsilons is None:
            self.epsilons = [0.1, 0.05, 0.025, 0.0125]
        if self.claimed_rates is None:
            self.claimed_rates = {"slip": 1.0, "friction": 0.25, "final_error": 0.125}


@dataclass
class CarlemanConfig:
    """Carleman weights and diagnostics"""
    lam: float = 2.0
    s: Optional[float] = None
    normalize: bool = True
    gradient_floor: float = 0.05
    corner_exclusion: float = 0.25
    quotient_samples: int = 4


@dataclass
class HUMConfig:
    """Penalized HUM and local fixed point"""
    penalty: float = 1e-6
    tol: float = 1e-8
    max_iter: int = 400
    stagnation_window: int = 25
    time_steps: int = 40
    fixed_point_tol: float = 1e-6
    fixed_point_terminal_tol: float = 1e-2
    fixed_point_max_iter: int = 12
    nonlinearity: str = "none"
    nonlinearity_strength: float = 1.0


@dataclass
class StrategyConfig:
    """Four-step pipeline"""
    horizon: float = 1.0
    delta: float = 1e-2
    epsilon: float = 0.025
    initial: str = "random"
    target: str = "smooth"
    amplitude: float = 0.05
    modes: int = 3
    proxy_samples: int = 8
    workers: int = 2
    seed: int = 0
    tolerance: float = 1e-2
    scaled_dt: float = 5e-3


@dataclass
class StorageConfig:
    """Storage configuration"""
    type: str = "csv"
    data_dir: str = "data"
    write_fields: bool = True


@dataclass
class LoggingConfig:
    """Logging configuration"""
    level: str = "INFO"
    file: str = "logs/lab.log"
    max_bytes: int = 10485760  # 10MB
    backup_count: int = 5
    format: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


@dataclass
class LabConfig:
    """Main lab configuration"""
    grid: GridConfig
    solver: SolverConfig
    flushing: FlushingConfig
    layer: LayerConfig
    expansion: ExpansionConfig
    carleman: CarlemanConfig
    hum: HUMConfig
    strategy: StrategyConfig
    storage: StorageConfig
    logging: LoggingConfig

    @classmethod
    def default(cls) -> "LabConfig":
        return cls(
            grid=GridConfig(),
            solver=SolverConfig(),
            flushing=FlushingConfig(),
            layer=LayerConfig(),
            expansion=ExpansionConfig(),
            carleman=CarlemanConfig(),
            hum=HUMConfig(),
            strategy=StrategyConfig(),
            storage=StorageConfig(),
            logging=LoggingConfig(),
        )

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "LabConfig":
        data = {k: v for k, v in data.items() if k != "_comments"}
        sections = {
            "grid": GridConfig,
            "solver": SolverConfig,
            "flushing": FlushingConfig,
            "layer": LayerConfig,
            "expansion": ExpansionConfig,
            "carleman": CarlemanConfig,
            "hum": HUMConfig,
            "strategy": StrategyConfig,
            "storage": StorageConfig,
            "logging": LoggingConfig,
        }
        unknown = set(data) - set(sections)
        if unknown:
            raise ConfigurationError(f"Unknown configuration sections: {sorted(unknown)}")
        return cls(**{name: section(**data.get(name, {})) for name, section in sections.items()})


class RuntimeSettings(BaseSettings):
    """Environment overrides (BLAB_LOG_LEVEL, BLAB_DATA_DIR, BLAB_WORKERS)"""
    model_config = SettingsConfigDict(env_prefix="BLAB_", extra="ignore")

    log_level: Optional[str] = None
    data_dir: Optional[str] = None
    workers: Optional[int] = None

    def apply(self, config: LabConfig) -> LabConfig:
        if self.log_level:
            config.logging.level = self.log_level.upper()
        if self.data_dir:
            config.storage.data_dir = self.data_dir
        if self.workers:
            config.strategy.workers = self.workers
            config.flushing.workers = self.workers
        return config


class ConfigManager:
    """Configuration manager for the control lab"""

    def __init__(self, config_path: Optional[str] = None):
        self.config_path = config_path or "config.json"
        self.config: Optional[LabConfig] = None

    def load_config(self, allow_missing: bool = False) -> LabConfig:
        """Load configuration from file, then apply environment overrides"""
        try:
            config_file = Path(self.config_path)

            if not config_file.exists():
                if not allow_missing:
                    raise ConfigurationError(f"Configuration file not found: {self.config_path}")
                logger.info(f"Configuration file not found, using defaults | path={self.config_path}")
                config_data: Dict[str, Any] = {}
            else:
                with open(config_file, 'r', encoding='utf-8') as f:
                    config_data = json.load(f)

            self.config = RuntimeSettings().apply(LabConfig.from_dict(config_data))
            self.validate_config()
            return self.config

        except ValidationError:
            raise
        except Exception as e:
            raise ConfigurationError(f"Failed to load configuration: {e}")

    def save_config(self, config: Optional[LabConfig] = None) -> None:
        """Save configuration to file"""
        try:
            config_to_save = config or self.config
            if not config_to_save:
                raise ConfigurationError("No configuration to save")

            config_file = Path(self.config_path)
            config_file.parent.mkdir(parents=True, exist_ok=True)

            config_dict = asdict(config_to_save)
            config_dict["_comments"] = {
                "description": "Boussinesq控制实验室配置文件",
                "version": "1.0.0",
            }

            with open(config_file, 'w', encoding='utf-8') as f:
                json.dump(config_dict, f, indent=2, ensure_ascii=False)

        except Exception as e:
            raise ConfigurationError(f"Failed to save configuration: {e}")

    def validate_config(self) -> None:
        """Validate configuration"""
        if not self.config:
            raise ConfigurationError("No configuration loaded")

        grid = self.config.grid
        if grid.nx < 8 or grid.ny < 8:
            raise ValidationError("Grid needs at least 8 cells per direction")
        if not 0.0 < grid.physical_fraction < 1.0:
            raise ValidationError("physical_fraction must lie in (0, 1)")
        if len(grid.control_region) != 4:
            raise ValidationError("control_region must be [x0, x1, y0, y1]")
        if grid.collar_rows < 3:
            raise ValidationError("collar_rows must be at least 3")

        solver = self.config.solver
        if solver.epsilon <= 0 or solver.dt <= 0 or solver.t_end <= 0:
            raise ValidationError("Solver epsilon, dt and t_end must be positive")
        if not 0.0 < solver.cfl <= 1.0:
            raise ValidationError("CFL number must lie in (0, 1]")

        flushing = self.config.flushing
        lo, hi = flushing.amplitude_support
        if not 0.0 <= lo < hi <= 1.0:
            raise ValidationError("amplitude_support must be an increasing pair inside [0, 1]")
        if flushing.amplitude_safety < 1.0:
            raise ValidationError("amplitude_safety must be at least 1")

        layer = self.config.layer
        w0, w1 = layer.dissipation_window
        if not hi < w0 < w1 < 1.0:
            raise ValidationError("dissipation_window must start after the reference flow stops")
        if layer.moments < 0:
            raise ValidationError("moments must be non-negative")

        if self.config.expansion.mode not in ("slip", "friction", "tracking-phase-1", "tracking-phase-2"):
            raise ValidationError(f"Unknown expansion mode: {self.config.expansion.mode}")
        if any(e <= 0 or e >= 1 for e in self.config.expansion.epsilons):
            raise ValidationError("epsilons must lie in (0, 1)")

        if self.config.hum.nonlinearity not in ("none", "linear", "cubic"):
            raise ValidationError(f"Unknown nonlinearity: {self.config.hum.nonlinearity}")
        if self.config.hum.fixed_point_tol <= 0 or self.config.hum.fixed_point_terminal_tol <= 0:
            raise ValidationError("Fixed-point tolerances must be positive")
        if self.config.strategy.target not in ("zero", "smooth"):
            raise ValidationError(f"Unknown target: {self.config.strategy.target}")
        if self.config.strategy.initial not in ("zero", "random"):
            raise ValidationError(f"Unknown initial data: {self.config.strategy.initial}")
        strategy = self.config.strategy
        if strategy.horizon <= 0 or strategy.delta <= 0 or strategy.tolerance <= 0:
            raise ValidationError("Strategy horizon, delta and tolerance must be positive")
        if not 0.0 < strategy.epsilon < 1.0:
            raise ValidationError("Strategy epsilon must lie in (0, 1)")

    def get_grid_config(self) -> Optional[GridConfig]:
        return self.config.grid if self.config else None

    def get_solver_config(self) -> Optional[SolverConfig]:
        return self.config.solver if self.config else None

    def get_flushing_config(self) -> Optional[FlushingConfig]:
        return self.config.flushing if self.config else None

    def get_layer_config(self) -> Optional[LayerConfig]:
        return self.config.layer if self.config else None

    def get_expansion_config(self) -> Optional[ExpansionConfig]:
        return self.config.expansion if self.config else None

    def get_carleman_config(self) -> Optional[CarlemanConfig]:
        return self.config.carleman if self.config else None

    def get_hum_config(self) -> Optional[HUMConfig]:
        return self.config.hum if self.config else None

    def get_strategy_config(self) -> Optional[StrategyConfig]:
        return self.config.strategy if self.config else None

    def get_storage_config(self) -> Optional[StorageConfig]:
        return self.config.storage if self.config else None

    def get_logging_config(self) -> Optional[LoggingConfig]:
        return self.config.logging if self.config else None

    def create_example_config(self, output_path: str = "config.example.json") -> None:
        """Create example configuration file"""
        try:
            manager = ConfigManager(output_path)
            manager.save_config(LabConfig.default())
            logger.info(f"✅ Example configuration created: {output_path}")
        except Exception as e:
            raise ConfigurationError(f"Failed to create example configuration: {e}")
