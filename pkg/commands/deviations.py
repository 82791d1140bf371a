#!/usr/bin/env python3
"""
Large-deviation commands: bound constants, empirical deviation masses and
the side-by-side comparison.
"""

import logging

from commands import execute, experiment_options
from deviations import (
    bound_rows, default_fit_functions, empirical_rows, fit_D, ld_constants, theorem1_rows,
)
from thermo import equilibrium_measure

logger = logging.getLogger(__name__)

BOUND_COLUMNS = ['t', 'bound_thm1', 'bound_prop32', 'X', 'Y', 'T0', 'D', 'epsilon']
EMPIRICAL_COLUMNS = ['t', 'Z_exact', 'Z_exact_strict', 'Z_mc', 'mc_stderr', 'epsilon']
THEOREM1_COLUMNS = ['t', 'Z_exact', 'Z_mc', 'mc_stderr', 'bound_thm1', 'bound_prop32',
                    'X', 'Y', 'T0', 'D', 'epsilon']


def resolve_D(experiment, mu) -> float:
    """Configured D, or the fitted one when the config says "fit"."""
    settings = experiment.deviations
    if settings.D != 'fit':
        return settings.D
    fitted = fit_D(mu, default_fit_functions(experiment.observable), settings.m_grid, settings.epsilon_grid,
                   default_D=settings.default_D, margin=settings.margin, budget=settings.budget)
    return fitted.D


def _constants(experiment):
    mu = equilibrium_measure(experiment.spec, experiment.potential)
    D = resolve_D(experiment, mu)
    return mu, ld_constants(mu, experiment.observable, experiment.deviations.epsilon, D)


def run_ld_bound(experiment, store, threads):
    _, constants = _constants(experiment)
    store.write_csv('ld_bound.csv', bound_rows(constants, experiment.deviations.t_grid), BOUND_COLUMNS)
    logger.info(f"Bound constants use D = {constants.D!r}")


def run_ld_empirical(experiment, store, threads):
    settings = experiment.deviations
    mu = equilibrium_measure(experiment.spec, experiment.potential)
    rows = empirical_rows(mu, experiment.observable, settings.epsilon, settings.t_grid, settings.mc_samples,
                          settings.seed, settings.level_mode, settings.budget, threads)
    store.write_csv('ld_empirical.csv', rows, EMPIRICAL_COLUMNS)


def run_theorem1(experiment, store, threads):
    settings = experiment.deviations
    mu, constants = _constants(experiment)
    rows = theorem1_rows(mu, experiment.observable, constants, settings.t_grid, settings.mc_samples,
                         settings.seed, settings.level_mode, settings.budget, threads)
    store.write_csv('theorem1.csv', rows, THEOREM1_COLUMNS)


def create_deviation_commands(cli):
    """Register large-deviation commands with the CLI group."""

    @cli.command('ld-bound')
    @experiment_options
    def ld_bound(config_path, out_dir, threads, log_file, log_level):
        """Bound exp(-Xt + log t + Y) and its two-term form on the t grid."""
        execute('ld-bound', run_ld_bound, config_path, out_dir, threads, log_file, log_level)

    @cli.command('ld-empirical')
    @experiment_options
    def ld_empirical(config_path, out_dir, threads, log_file, log_level):
        """Exact and Monte-Carlo deviation masses on the t grid."""
        execute('ld-empirical', run_ld_empirical, config_path, out_dir, threads, log_file, log_level)

    @cli.command('theorem1')
    @experiment_options
    def theorem1(config_path, out_dir, threads, log_file, log_level):
        """Empirical deviation masses next to the bound for t >= T0."""
        execute('theorem1', run_theorem1, config_path, out_dir, threads, log_file, log_level)
