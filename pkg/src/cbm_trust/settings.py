"""Runtime settings read from the environment / .env file, and logging setup."""

import logging
import os
from dataclasses import dataclass
from pathlib import Path

from dotenv import load_dotenv
from rich.logging import RichHandler


@dataclass(frozen=True)
class Settings:
    """Process-wide settings that are not part of a run's configuration."""

    output_dir: Path
    log_level: str
    num_threads: int | None

    @classmethod
    def from_env(cls) -> "Settings":
        """Create Settings from environment variables.

        A `.env` file in the working directory is loaded first; variables already
        present in the environment win.
        """
        load_dotenv()

        threads = os.getenv("CBM_TRUST_NUM_THREADS")
        return cls(
            output_dir=Path(os.getenv("CBM_TRUST_OUTPUT_DIR", "runs")),
            log_level=os.getenv("CBM_TRUST_LOG_LEVEL", "INFO").upper(),
            num_threads=int(threads) if threads else None,
        )


_settings: Settings | None = None


def get_settings() -> Settings:
    """Return the cached settings, reading the environment on first use."""
    global _settings
    if _settings is None:
        _settings = Settings.from_env()
    return _settings


def configure_logging(level: str | None = None) -> None:
    """Install a rich console handler on the package logger."""
    level = (level or get_settings().log_level).upper()
    logger = logging.getLogger("cbm_trust")
    logger.setLevel(level)
    if not any(isinstance(h, RichHandler) for h in logger.handlers):
        handler = RichHandler(rich_tracebacks=True, show_path=False)
        handler.setFormatter(logging.Formatter("%(message)s"))
        logger.addHandler(handler)
