__version__ = "0.3.0"

from .config import SimConfig, parse_config, save_config
from .solver import RunResult, SimParams, SystemState, run, simulate, solve_step

__all__ = [
    "RunResult",
    "SimConfig",
    "SimParams",
    "SystemState",
    "parse_config",
    "run",
    "save_config",
    "simulate",
    "solve_step",
    "__version__",
]
