"""
Runtime settings read from the environment

A ``.env`` file in the working directory is loaded first, then values are
read with ``os.getenv``. See env.example.txt for the documented variables.
"""

import os
import logging
from dataclasses import dataclass
from typing import Optional

from dotenv import load_dotenv

from mixclus.errors import ConfigError

logger = logging.getLogger(__name__)

DEFAULT_MC_CAP = 256


@dataclass(frozen=True)
class Settings:
    """Process-wide defaults; run configuration overrides them"""
    threads: int = 1
    log_level: str = "INFO"
    log_file: Optional[str] = None
    mc_cap: int = DEFAULT_MC_CAP


def _int_env(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"{name} must be an integer, got {raw!r}")
    if value < 1:
        raise ConfigError(f"{name} must be >= 1, got {value}")
    return value


def load_settings() -> Settings:
    """Build Settings from .env and the process environment"""
    load_dotenv()
    settings = Settings(
        threads=_int_env("MIXCLUS_THREADS", 1),
        log_level=os.getenv("MIXCLUS_LOG_LEVEL", "INFO").upper(),
        log_file=os.getenv("MIXCLUS_LOG_FILE") or None,
        mc_cap=_int_env("MIXCLUS_MC_CAP", DEFAULT_MC_CAP),
    )
    logger.debug(f"Settings loaded: {settings}")
    return settings


_settings: Optional[Settings] = None


def get_settings() -> Settings:
    """Get or create the cached Settings"""
    global _settings
    if _settings is None:
        _settings = load_settings()
    return _settings


def reset_settings() -> None:
    """Forget the cached Settings (tests change the environment)"""
    global _settings
    _settings = None
