#!/usr/bin/env python3
"""
thermoflow command line.
Equilibrium states, suspension flows, large-deviation bounds and escape
rates on subshifts of finite type, driven by a JSON experiment config.

Usage:
    python app.py <command> --config experiment.json [--out DIR] [--threads N]
"""

import click

from commands.config import create_config_commands
from commands.deviations import create_deviation_commands
from commands.escape import create_escape_commands
from commands.flow import create_flow_commands
from commands.thermo import create_thermo_commands
from harness import TOOL_VERSION


@click.group()
@click.version_option(TOOL_VERSION, prog_name='thermoflow')
def cli():
    """Computational experiments on suspension flows over subshifts of finite type."""


# Register commands
create_thermo_commands(cli)
create_flow_commands(cli)
create_deviation_commands(cli)
create_escape_commands(cli)
create_config_commands(cli)

if __name__ == '__main__':
    cli()
