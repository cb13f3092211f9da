"""
Validation utilities for command-line inputs
"""
import logging
import re
from pathlib import Path
from typing import List, Optional, Union

from cli.utils.exceptions import CommandError

logger = logging.getLogger(__name__)

U64_MAX = 2 ** 64 - 1


class InputValidator:
    """Input validation utilities"""

    @staticmethod
    def validate_seed(seed: Union[str, int, None]) -> Optional[int]:
        """Seed as an unsigned 64-bit integer"""
        if seed is None:
            return None
        try:
            value = int(seed)
        except (ValueError, TypeError):
            raise CommandError(f"Seed must be an integer, got {seed!r}")
        if not 0 <= value <= U64_MAX:
            raise CommandError(f"Seed must lie in [0, 2^64 - 1], got {value}")
        return value

    @staticmethod
    def validate_epsilons(text: Union[str, List[float], None]) -> Optional[List[float]]:
        """Comma or space separated eps values in (0, 1), returned sorted from large to small"""
        if text is None:
            return None
        if isinstance(text, str):
            parts = [p for p in re.split(r"[,\s]+", text.strip()) if p]
        else:
            parts = list(text)
        if not parts:
            raise CommandError("Empty eps list")
        try:
            values = [float(p) for p in parts]
        except (ValueError, TypeError):
            raise CommandError(f"eps list must contain numbers, got {text!r}")
        bad = [v for v in values if not 0.0 < v < 1.0]
        if bad:
            raise CommandError(f"eps values must lie in (0, 1), got {bad}")
        if len(set(values)) != len(values):
            raise CommandError("eps values must be distinct")
        return sorted(values, reverse=True)

    @staticmethod
    def validate_output_dir(path: Union[str, Path, None]) -> Optional[Path]:
        if path is None:
            return None
        out = Path(path)
        if out.exists() and not out.is_dir():
            raise CommandError(f"Output path exists and is not a directory: {out}")
        return out

    @staticmethod
    def validate_config_path(path: Union[str, Path, None]) -> Optional[Path]:
        if path is None:
            return None
        config = Path(path)
        if config.suffix.lower() != ".json":
            logger.warning(f"⚠️ Configuration file without .json suffix: {config}")
        return config


def parse_epsilons(text: Union[str, List[float], None]) -> Optional[List[float]]:
    return InputValidator.validate_epsilons(text)
