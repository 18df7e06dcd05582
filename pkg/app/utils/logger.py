"""Logging setup shared by the CLI entry points."""

from __future__ import annotations

import logging


def setup_logging(verbose: bool = False, level_name: str = "INFO") -> None:
    """Configure root logging once per process.

    Args:
        verbose: Force DEBUG output
        level_name: Level used when not verbose (usually FSKETCH_LOG_LEVEL)
    """
    level = logging.DEBUG if verbose else getattr(logging, level_name.upper(), logging.INFO)
    logging.basicConfig(
        level=level,
        format="%(asctime)s - %(levelname)s - %(message)s",
        datefmt="%H:%M:%S",
        force=True,
    )
