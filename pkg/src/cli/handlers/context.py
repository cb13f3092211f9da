"""
Shared state of one command invocation
"""
import logging
from dataclasses import asdict, dataclass
from typing import List, Optional

from cli.storage.csv_storage import CSVStorage
from services.config import LabConfig
from services.factory import LabFactory
from services.strategy.manifest import RunManifest

logger = logging.getLogger(__name__)


@dataclass
class CommandContext:
    """Configuration, cached builders and output storage for a command"""
    config: LabConfig
    factory: LabFactory
    storage: CSVStorage
    seed: Optional[int] = None
    epsilons: Optional[List[float]] = None

    @classmethod
    def create(cls, config: LabConfig, out_dir: Optional[str] = None, seed: Optional[int] = None,
               epsilons: Optional[List[float]] = None) -> "CommandContext":
        storage = CSVStorage(out_dir or config.storage.data_dir)
        return cls(config, LabFactory(config), storage, seed, epsilons)

    @property
    def effective_seed(self) -> int:
        return self.config.strategy.seed if self.seed is None else self.seed

    @property
    def write_fields(self) -> bool:
        return self.config.storage.write_fields

    def manifest(self, command: str, *sections: str) -> RunManifest:
        """Empty manifest carrying the configuration sections the command reads"""
        config = {name: asdict(getattr(self.config, name)) for name in sections}
        return RunManifest(command=command, seed=self.effective_seed, config=config)

    def finish(self, manifest: RunManifest) -> RunManifest:
        manifest.success = manifest.failed_step is None
        self.storage.write_manifest(manifest)
        return manifest
