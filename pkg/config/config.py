# config/config.py
from __future__ import annotations

import logging
import os
from pathlib import Path

from dotenv import load_dotenv

from stats.errors import ConfigurationError

# Load .env from project root if present
BASE_DIR = Path(__file__).parent.parent
ENV_PATH = BASE_DIR / ".env"

if ENV_PATH.exists():
    load_dotenv(ENV_PATH)
else:
    load_dotenv()  # fallback: load from wherever

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def _int_env(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigurationError(f"{name} must be an integer, got {raw!r}") from None


def _float_env(name: str, default: float) -> float:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return float(raw)
    except ValueError:
        raise ConfigurationError(f"{name} must be a number, got {raw!r}") from None


def get_default_seed() -> int:
    """Master seed used when the CLI is not given --seed."""
    return _int_env("VCANOVA_SEED", 20240101)


def get_default_workers() -> int:
    return _int_env("VCANOVA_WORKERS", 1)


def get_default_reps() -> int:
    return _int_env("VCANOVA_REPS", 10_000)


def get_batch_size() -> int:
    """
    Number of simulated datasets generated per vectorized batch.

    Larger batches are faster but hold (batch x observations) floats in memory.
    """
    return _int_env("VCANOVA_BATCH_SIZE", 20_000)


def get_ks_threshold() -> float:
    """Minimum KS p-value for a distributional check to pass."""
    return _float_env("VCANOVA_KS_THRESHOLD", 0.01)


def get_log_level() -> str:
    return os.getenv("VCANOVA_LOG_LEVEL", "WARNING").upper()


def get_archive_path() -> Path:
    """
    Return the SQLite file used to archive verification reports.

    You can override this in your .env as VCANOVA_DB_PATH.
    """
    raw = os.getenv("VCANOVA_DB_PATH")
    if raw:
        return Path(raw)
    return BASE_DIR / "data" / "verify_runs.db"


def configure_logging(level: str | None = None) -> None:
    """Install a single stream handler on the root logger."""
    name = (level or get_log_level()).upper()
    if not isinstance(logging.getLevelName(name), int):
        raise ConfigurationError(f"unknown log level {name!r}")
    logging.basicConfig(
        level=name,
        format=LOG_FORMAT,
        force=True,
    )
