# Command modules for the thermoflow CLI

import sys

import click

from config import setup_logging
from harness import run_experiment

_OPTIONS = (
    click.option('--config', 'config_path', required=True, type=click.Path(dir_okay=False),
                 help='JSON experiment configuration'),
    click.option('--out', 'out_dir', default=None, help='Output directory (default: output.directory)'),
    click.option('--threads', type=click.IntRange(min=1), default=None, envvar='THERMOFLOW_THREADS',
                 help='Worker threads (default: CPU count)'),
    click.option('--log-file', default=None, help='Also append log records to this file'),
    click.option('--log-level', default='INFO', show_default=True,
                 type=click.Choice(['DEBUG', 'INFO', 'WARNING', 'ERROR'], case_sensitive=False)),
)


def experiment_options(func):
    """Options shared by every experiment command."""
    for option in reversed(_OPTIONS):
        func = option(func)
    return func


def execute(command: str, body, config_path, out_dir, threads, log_file, log_level):
    """Configure logging, run the command body and exit with its status."""
    setup_logging(log_level, log_file)
    sys.exit(run_experiment(command, config_path, body, out_dir, threads))
