from .config import ExperimentConfig, load_config, parse_config
from .patterns import PATTERNS, generate_pattern, load_placement, pilot_shape, save_placement
from .runner import RunResult, Scenario, run_experiment

__all__ = [
    "PATTERNS",
    "ExperimentConfig",
    "RunResult",
    "Scenario",
    "generate_pattern",
    "load_config",
    "load_placement",
    "parse_config",
    "pilot_shape",
    "run_experiment",
    "save_placement",
]
