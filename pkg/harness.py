#!/usr/bin/env python3
"""
Experiment orchestration: load config, lock the output directory, run a
command body, write the manifest and map failures to exit codes.
"""

import logging
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Optional

import psutil

from config_manager import ConfigError, ConfigManager, ExperimentConfig
from runlock import LockBusy, RunLock
from sft_core import ThermoflowError
from store import RunStore

logger = logging.getLogger(__name__)

TOOL_VERSION = '1.0.0'

EXIT_OK = 0
EXIT_BUSY = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

CommandBody = Callable[[ExperimentConfig, RunStore, int], None]


def resolve_threads(threads: Optional[int]) -> int:
    """Explicit value, else the CPU count."""
    if threads is not None and threads >= 1:
        return int(threads)
    return psutil.cpu_count() or 1


def load_experiment(command: str, config_path) -> ExperimentConfig:
    """
    Build the experiment for a command.

    Domain validation failures while building (inadmissible tables, roof
    below 1, non-primitive matrices) are configuration errors here, as are
    values of the wrong JSON type.
    """
    manager = ConfigManager(config_path)
    try:
        return manager.experiment(command)
    except ThermoflowError as e:
        raise ConfigError(str(e))


def run_experiment(command: str, config_path, body: CommandBody, out_dir: Optional[str] = None,
                   threads: Optional[int] = None) -> int:
    """
    Run one command end to end.

    Returns:
        0 on success, 1 when the output directory is locked, 2 on
        configuration errors, 3 on numerical failures
    """
    started_at = datetime.now(timezone.utc).isoformat()
    start = time.perf_counter()
    logger.info(f"🔍 Running {command} with {config_path}")

    try:
        experiment = load_experiment(command, config_path)
    except ConfigError as e:
        logger.error(f"❌ Config error: {e}")
        return EXIT_CONFIG

    threads = resolve_threads(threads)
    out = Path(out_dir or experiment.output_directory)
    try:
        store = RunStore(out)
        with RunLock(out):
            body(experiment, store, threads)
            duration_ms = int(round((time.perf_counter() - start) * 1000))
            store.write_manifest(
                command=command, config_sha256=experiment.sha256, seed=experiment.seed,
                threads=threads, duration_ms=duration_ms, tool_version=TOOL_VERSION,
                started_at=started_at,
            )
    except LockBusy as e:
        logger.error(f"❌ {e}")
        return EXIT_BUSY
    except ConfigError as e:
        logger.error(f"❌ Config error: {e}")
        return EXIT_CONFIG
    except ThermoflowError as e:
        logger.error(f"❌ {command} failed: {type(e).__name__}: {e}")
        return EXIT_NUMERIC

    logger.info(f"✅ {command} finished in {duration_ms} ms; artifacts in {out}")
    return EXIT_OK
