"""Environment-driven runtime settings."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

try:  # Lazy dependency: load .env if python-dotenv is available
    from dotenv import load_dotenv
except ImportError:  # pragma: no cover - optional dependency
    load_dotenv = None  # type: ignore[assignment]

LOGGER = logging.getLogger("hyperchoq.config")

_DEFAULT_CACHE_SIZE = 8
_LOG_LEVELS = {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}


def _load_env() -> None:
    """Load environment variables from a .env file if available."""
    if load_dotenv is not None:
        load_dotenv()
        return

    env_path = Path(".env")
    if not env_path.exists():
        return

    for raw_line in env_path.read_text().splitlines():
        line = raw_line.strip()
        if not line or line.startswith("#") or "=" not in line:
            continue
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip().strip("'\"")
        if key and key not in os.environ:
            os.environ[key] = value


def _env_int(name: str, default: int, *, minimum: int = 1) -> int:
    value = os.getenv(name)
    if value is None or not value.strip():
        return default
    try:
        parsed = int(value)
    except ValueError:
        LOGGER.warning("Invalid %s value '%s'. Using default %s.", name, value, default)
        return default
    if parsed < minimum:
        LOGGER.warning("Invalid %s value '%s'. Using default %s.", name, value, default)
        return default
    return parsed


def _env_level(name: str, default: str) -> str:
    value = (os.getenv(name) or "").strip().upper()
    if not value:
        return default
    if value not in _LOG_LEVELS:
        LOGGER.warning("Invalid %s value '%s'. Using default %s.", name, value, default)
        return default
    return value


_load_env()


@dataclass(slots=True, frozen=True)
class Settings:
    """Snapshot of the environment knobs read at start-up."""

    threads: int
    log_level: str
    cache_size: int


@lru_cache(maxsize=1)
def load_settings() -> Settings:
    """``HYPERCHOQ_*`` variables, read once; ``load_settings.cache_clear()`` rereads them."""
    return Settings(
        threads=_env_int("HYPERCHOQ_THREADS", os.cpu_count() or 1),
        log_level=_env_level("HYPERCHOQ_LOG_LEVEL", "WARNING"),
        cache_size=_env_int("HYPERCHOQ_CACHE_SIZE", _DEFAULT_CACHE_SIZE),
    )
