#!/usr/bin/env python3
"""
Equilibrium-state commands: pressure and cylinder measures.
"""

import logging

import click

from commands import execute, experiment_options
from sft_core import format_word
from thermo import cylinder_table, entropy, equilibrium_measure, integrate

logger = logging.getLogger(__name__)

PRESSURE_COLUMNS = ['pressure', 'lead_eigenvalue', 'entropy', 'integral_phi', 'aperiodicity_power']
EQUILIBRIUM_COLUMNS = ['word', 'mu']


def run_pressure(experiment, store, threads):
    mu = equilibrium_measure(experiment.spec, experiment.potential)
    row = {
        'pressure': mu.pressure,
        'lead_eigenvalue': mu.lead_eigenvalue,
        'entropy': entropy(mu),
        'integral_phi': integrate(mu, experiment.potential),
        'aperiodicity_power': experiment.spec.aperiodicity_power,
    }
    store.write_csv('pressure.csv', [row], PRESSURE_COLUMNS)
    logger.info(f"Pressure = {mu.pressure!r}, entropy = {row['entropy']!r}")


def equilibrium_runner(length):
    """Body writing mu([w]) for every admissible word of the given length."""
    def run_equilibrium(experiment, store, threads):
        mu = equilibrium_measure(experiment.spec, experiment.potential)
        n = length or mu.depth
        rows = [{'word': format_word(experiment.spec, word), 'mu': mass} for word, mass in cylinder_table(mu, n)]
        store.write_csv('equilibrium.csv', rows, EQUILIBRIUM_COLUMNS)
        logger.info(f"Wrote {len(rows)} cylinder masses of length {n}")
    return run_equilibrium


def create_thermo_commands(cli):
    """Register equilibrium-state commands with the CLI group."""

    @cli.command('pressure')
    @experiment_options
    def pressure(config_path, out_dir, threads, log_file, log_level):
        """Pressure, leading eigenvalue and entropy of the potential."""
        execute('pressure', run_pressure, config_path, out_dir, threads, log_file, log_level)

    @cli.command('equilibrium')
    @experiment_options
    @click.option('--length', type=click.IntRange(min=1), default=None,
                  help='Cylinder length (default: potential depth, at least 2)')
    def equilibrium(config_path, out_dir, threads, log_file, log_level, length):
        """Cylinder measures of the equilibrium state."""
        execute('equilibrium', equilibrium_runner(length), config_path, out_dir, threads, log_file, log_level)
