#!/usr/bin/env python3
"""
Escape-rate commands.
"""

import logging

from commands import execute, experiment_options
from escape import discrete_rows, flow_rows, nested_check, theorem2_report
from thermo import equilibrium_measure

logger = logging.getLogger(__name__)

DISCRETE_COLUMNS = ['n', 'mu_In', 'R_discrete', 'ratio_discrete', 'gamma']
FLOW_COLUMNS = ['n', 'R_flow', 'band_lo', 'band_hi', 'R_flow_spectral', 'too_few_survivors']
NESTED_COLUMNS = ['condition', 'passed', 'detail']
THEOREM2_COLUMNS = ['n', 'mu_In', 'R_discrete', 'ratio_discrete', 'gamma', 'R_flow', 'band_lo', 'band_hi',
                    'nu_slab', 'ratio_flow', 'W', 'lower_bound', 'nested_1', 'nested_2', 'nested_3',
                    'nested_4', 'nested_5', 'R_flow_spectral', 'ratio_flow_spectral']


def run_escape_discrete(experiment, store, threads):
    mu = equilibrium_measure(experiment.spec, experiment.potential)
    store.write_csv('escape_discrete.csv', discrete_rows(mu, experiment.holes, threads), DISCRETE_COLUMNS)


def run_escape_flow(experiment, store, threads):
    settings = experiment.escape
    mu = equilibrium_measure(experiment.spec, experiment.potential)
    rows = flow_rows(mu, experiment.roof, experiment.holes, settings.t_grid, settings.mc_samples,
                     settings.seed, threads)
    store.write_csv('escape_flow.csv', rows, FLOW_COLUMNS)


def run_nested_check(experiment, store, threads):
    mu = equilibrium_measure(experiment.spec, experiment.potential)
    report = nested_check(experiment.holes, mu, experiment.escape.kappa_min)
    rows = [{'condition': c.condition, 'passed': c.passed, 'detail': c.detail} for c in report.conditions]
    store.write_csv('nested_check.csv', rows, NESTED_COLUMNS)


def run_theorem2(experiment, store, threads):
    settings = experiment.escape
    mu = equilibrium_measure(experiment.spec, experiment.potential)
    report = theorem2_report(mu, experiment.roof, experiment.holes, settings.t_grid, settings.mc_samples,
                             settings.seed, threads, settings.kappa_min)
    store.write_csv('theorem2.csv', report.rows, THEOREM2_COLUMNS)
    logger.info(f"Lower bound gamma / W = {report.lower_bound!r}")


def create_escape_commands(cli):
    """Register escape-rate commands with the CLI group."""

    @cli.command('escape-discrete')
    @experiment_options
    def escape_discrete(config_path, out_dir, threads, log_file, log_level):
        """Discrete escape rates and their ratio to the hole measure."""
        execute('escape-discrete', run_escape_discrete, config_path, out_dir, threads, log_file, log_level)

    @cli.command('escape-flow')
    @experiment_options
    def escape_flow(config_path, out_dir, threads, log_file, log_level):
        """Monte-Carlo and spectral flow escape rates."""
        execute('escape-flow', run_escape_flow, config_path, out_dir, threads, log_file, log_level)

    @cli.command('nested-check')
    @experiment_options
    def nested(config_path, out_dir, threads, log_file, log_level):
        """Check the nested-hole conditions."""
        execute('nested-check', run_nested_check, config_path, out_dir, threads, log_file, log_level)

    @cli.command('theorem2')
    @experiment_options
    def theorem2(config_path, out_dir, threads, log_file, log_level):
        """Escape ratios against the lower bound gamma / W."""
        execute('theorem2', run_theorem2, config_path, out_dir, threads, log_file, log_level)
