"""
Command Handlers Package
"""
from .context import CommandContext
from .control import hum_handler, strategy_handler, sweep_handler
from .flushing import flush_handler, layer_handler
from .solver import extend_handler, simulate_handler

COMMANDS = {
    "simulate": simulate_handler,
    "extend": extend_handler,
    "flush": flush_handler,
    "layer": layer_handler,
    "hum": hum_handler,
    "strategy": strategy_handler,
    "sweep": sweep_handler,
}

__all__ = [
    'COMMANDS',
    'CommandContext',
    'simulate_handler',
    'extend_handler',
    'flush_handler',
    'layer_handler',
    'hum_handler',
    'strategy_handler',
    'sweep_handler'
]
