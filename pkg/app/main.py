"""
Entry point for the fsketch CLI.

Exit codes:
    0  success
    2  configuration, domain or file-format error
    3  pipeline or estimation failure

Usage:
    python -m app.main --help
"""

from __future__ import annotations

import logging
import sys
from typing import List, Optional

from app.cli.commands import build_parser
from app.config import get_settings
from app.errors import (
    ConfigError,
    DomainError,
    EstimationUnavailableError,
    FormatError,
    FSketchError,
    PipelineError,
)
from app.utils.logger import setup_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PIPELINE = 3


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings = get_settings()
    except ConfigError as e:
        setup_logging(args.verbose)
        logger.error(str(e))
        return EXIT_CONFIG
    setup_logging(args.verbose, settings.log_level)

    try:
        return args.handler(args)
    except (ConfigError, DomainError, FormatError) as e:
        logger.error(str(e))
        return EXIT_CONFIG
    except (PipelineError, EstimationUnavailableError) as e:
        logger.error(str(e))
        return EXIT_PIPELINE
    except FSketchError as e:
        logger.error(str(e))
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())
