#!/usr/bin/env python3
"""
Configuration validation command.
"""

import logging
import sys

import click

from config import setup_logging
from config_manager import COMMANDS, validate_config
from harness import EXIT_CONFIG, EXIT_OK

logger = logging.getLogger(__name__)


def create_config_commands(cli):
    """Register configuration commands with the CLI group."""

    @cli.command('validate-config')
    @click.option('--config', 'config_path', required=True, type=click.Path(dir_okay=False),
                  help='JSON experiment configuration')
    @click.option('--command', 'command', default=None, type=click.Choice(COMMANDS),
                  help='Also check the blocks and seeds this command needs')
    @click.option('--log-level', default='INFO', type=click.Choice(['DEBUG', 'INFO', 'WARNING', 'ERROR'],
                                                                   case_sensitive=False))
    def validate(config_path, command, log_level):
        """Validate a configuration without running anything."""
        setup_logging(log_level)
        diagnostics = validate_config(config_path, command)
        for message in diagnostics:
            logger.error(f"❌ {message}")
        if diagnostics:
            sys.exit(EXIT_CONFIG)
        logger.info(f"✅ {config_path} is valid")
        sys.exit(EXIT_OK)
