#!/usr/bin/env python3
"""
Logging setup for the thermoflow command line.
"""

import logging
import sys
from typing import Optional

LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'


def setup_logging(level: str = 'INFO', log_file: Optional[str] = None):
    """
    Configure logging for a CLI run.

    Diagnostics go to standard error; a log file is added only when asked
    for, so output directories hold data files and the manifest alone.
    """
    handlers = [logging.StreamHandler(sys.stderr)]
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(
        level=getattr(logging, str(level).upper(), logging.INFO),
        format=LOG_FORMAT,
        handlers=handlers,
        force=True,
    )
    return logging.getLogger(__name__)
