#!/usr/bin/env python3
"""
Boussinesq Control Lab - Main Entry Point
"""
import argparse
import asyncio
import logging
import signal
import sys
import time
from pathlib import Path
from typing import List, Optional

# Add src to path
sys.path.insert(0, str(Path(__file__).parent))

from cli.handlers import COMMANDS, CommandContext
from cli.middleware.logging import command_logger, performance_logger, setup_logging
from cli.utils.exceptions import CliError
from cli.utils.formatters import format_duration, format_manifest
from cli.utils.validators import InputValidator
from services.config import ConfigManager, LabConfig
from services.exceptions import LabError
from services.strategy import RunManifest

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default="config.json", help="JSON configuration file (defaults apply if missing)")
    common.add_argument("--out", default=None, help="output directory for CSV files and manifest.json")
    common.add_argument("--seed", default=None, help="seed of the random initial data (u64)")
    common.add_argument("--eps", default=None, help="comma separated eps values, e.g. 0.1,0.05,0.025")

    parser = argparse.ArgumentParser(prog="boussinesq-lab", description="Controllability lab for the Boussinesq system")
    commands = parser.add_subparsers(dest="command", required=True)
    descriptions = {
        "simulate": "free run of the initial data with the energy audit",
        "extend": "extend the initial data from the physical domain to the box",
        "flush": "reference flow, exit times and transport null control",
        "layer": "boundary layers of the reference flow and their decay",
        "hum": "penalized HUM control, Carleman quotient and local fixed point",
        "strategy": "four-step global control strategy with interface traces",
        "sweep": "eps sweep of tracking errors and remainder norms with rate fits",
    }
    for name in COMMANDS:
        commands.add_parser(name, parents=[common], help=descriptions[name])
    return parser


class ControlLab:
    """Main lab application"""

    def __init__(self, config_path: str = "config.json", out_dir: Optional[str] = None,
                 seed: Optional[int] = None, epsilons: Optional[List[float]] = None):
        self.config_path = config_path
        self.out_dir = out_dir
        self.seed = seed
        self.epsilons = epsilons
        self.config: Optional[LabConfig] = None
        self.context: Optional[CommandContext] = None

    def initialize(self) -> None:
        """Load the configuration, apply command-line overrides and set up logging"""
        self.config = ConfigManager(self.config_path).load_config(allow_missing=True)
        if self.seed is not None:
            self.config.strategy.seed = self.seed
        if self.epsilons:
            self.config.expansion.epsilons = list(self.epsilons)
            self.config.strategy.epsilon = min(self.epsilons)
        if self.out_dir:
            self.config.storage.data_dir = str(self.out_dir)

        setup_logging(self.config.logging)
        logger.info("🚀 Initializing Boussinesq Control Lab...")
        logger.info("✅ Configuration loaded")
        self.context = CommandContext.create(self.config, self.config.storage.data_dir, self.seed, self.epsilons)
        logger.info(f"✅ Output directory ready | {self.context.storage.data_dir}")

    async def run(self, command: str) -> int:
        """Run one command; the exit code is 0 only for a successful manifest"""
        if command not in COMMANDS:
            logger.error(f"❌ Unknown command: {command}")
            return 2
        start = time.perf_counter()
        try:
            if self.context is None:
                self.initialize()
            command_logger.log_command(command, {"config": self.config_path, "out": self.out_dir,
                                                 "seed": self.seed, "eps": self.epsilons})
            with performance_logger.track(command):
                manifest: RunManifest = await COMMANDS[command](self.context)
        except (LabError, CliError) as e:
            logger.error(f"❌ {command} failed: {e}")
            command_logger.log_result(command, False, time.perf_counter() - start, {"error": str(e)})
            return 1

        elapsed = time.perf_counter() - start
        command_logger.log_result(command, manifest.success, elapsed, {"failed_step": manifest.failed_step})
        print(format_manifest(manifest))
        print(f"Elapsed: {format_duration(elapsed)} | Output: {self.context.storage.data_dir}")
        return 0 if manifest.success else 1

    def stop(self) -> None:
        """Drop cached objects"""
        if self.context is not None:
            self.context.factory.cleanup()
        logger.info("✅ Control lab stopped")

    def setup_signal_handlers(self):
        """Setup signal handlers for graceful shutdown"""
        def signal_handler(signum, frame):
            logger.info(f"Received signal {signum}, shutting down...")
            raise KeyboardInterrupt

        signal.signal(signal.SIGINT, signal_handler)
        signal.signal(signal.SIGTERM, signal_handler)


async def main(argv: Optional[List[str]] = None) -> int:
    """Main function"""
    args = build_parser().parse_args(argv)
    try:
        lab = ControlLab(
            config_path=str(InputValidator.validate_config_path(args.config)),
            out_dir=InputValidator.validate_output_dir(args.out),
            seed=InputValidator.validate_seed(args.seed),
            epsilons=InputValidator.validate_epsilons(args.eps),
        )
    except CliError as e:
        logger.error(f"❌ Invalid arguments: {e}")
        return 2

    lab.setup_signal_handlers()
    try:
        return await lab.run(args.command)
    except KeyboardInterrupt:
        logger.info("Received keyboard interrupt, shutting down...")
        return 130
    finally:
        lab.stop()


if __name__ == "__main__":
    sys.exit(asyncio.run(main()))
