import os
import sys

import numpy as np
from loguru import logger

default_log_name = "otfs_dfrc"

# -v count -> loguru level; negative counts come only from programmatic callers.
LEVELS = ("CRITICAL", "ERROR", "WARNING", "SUCCESS", "INFO", "DEBUG", "TRACE")
_QUIET = LEVELS.index("SUCCESS")


def set_log_level(level: int | None) -> str:
    """Console level from a `-v` count, else `LOGURU_LEVEL`, else `SUCCESS`.

    One `-v` shows stage progress (INFO), two add per-iteration solver
    detail (DEBUG), three add TRACE.
    """
    if level is not None:
        return LEVELS[max(0, min(len(LEVELS) - 1, _QUIET + level))]
    return os.getenv("LOGURU_LEVEL") or LEVELS[_QUIET]


def setup_logger(level: int | None, log_name: str = default_log_name, log_dir: str = "."):
    """Configure loguru for one run.

    Entrypoints call this once, pointing `log_dir` at the run's output
    directory so `{log_name}.log` sits beside the artifacts. Library modules
    use `from loguru import logger` directly.
    """
    console_level = set_log_level(level)
    line = "<cyan>{time:HH:mm:ss.SSS}</cyan> | <level>{level: >8}</level> | <level>{message}</level>"
    origin = " <dim>({name}:{function}:{line} pid-{process})</dim>"
    verbose = console_level in ("DEBUG", "TRACE")

    os.makedirs(log_dir, exist_ok=True)
    logger.remove()
    logger.add(sys.stdout, level=console_level, format=line + origin if verbose else line, diagnose=verbose)
    # Worker processes append through the queue; the file always keeps INFO and up.
    logger.add(
        os.path.join(log_dir, f"{log_name}.log"),
        level="INFO",
        format="{time:YYYY-MM-DD HH:mm:ss.SSS} | {level: >8} | {message} ({name}:{line})",
        enqueue=True,
        mode="a",
        colorize=False,
        diagnose=False,
        rotation="20 MB",
    )


def max_workers(requested: int | None = None) -> int:
    """Worker count for process pools.

    Priority: explicit request, then `OTFS_DFRC_WORKERS`, then a single worker.
    Never more than the CPU count or 16.
    """
    if requested is None:
        env = os.getenv("OTFS_DFRC_WORKERS")
        requested = int(env) if env else 1
    return max(1, min(16, os.cpu_count() or 1, requested))


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def db(value: float | np.ndarray) -> float | np.ndarray:
    """Power ratio in decibels; zero maps to -inf."""
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(value)


def db_to_linear(value_db: float | np.ndarray) -> float | np.ndarray:
    return 10.0 ** (np.asarray(value_db) / 10.0)


def spawn_seeds(seed: int | np.random.SeedSequence, n: int) -> list[np.random.SeedSequence]:
    """Independent child streams for `n` Monte Carlo workers or trials."""
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return root.spawn(n)


def log_stage(stage: str, **fields) -> None:
    details = ", ".join(f"{k}={v}" for k, v in fields.items())
    logger.info(f"[{stage}] {details}" if details else f"[{stage}]")
