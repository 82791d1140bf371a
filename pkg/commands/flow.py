#!/usr/bin/env python3
"""
Flow simulation command: sample nu, flow for time t, record end points.
"""

import logging
import math

import numpy as np

from commands import execute, experiment_options
from sft_core import format_word, to_word
from suspension import flow_march, sample_nu_batch
from thermo import equilibrium_measure

logger = logging.getLogger(__name__)

SIMULATE_COLUMNS = ['sample', 'base_word', 'level', 't', 'laps', 'end_word', 'end_level', 'flow_average']


def run_simulate(experiment, store, threads):
    settings = experiment.simulate
    F = experiment.observable
    spec = experiment.spec
    mu = equilibrium_measure(spec, experiment.potential)
    length = int(math.ceil(settings.t + F.roof.sup_norm)) + F.tilde_depth
    rng = np.random.default_rng(settings.seed)
    words, levels = sample_nu_batch(mu, F.roof, settings.samples, length, rng)
    march = flow_march(F, words, levels, settings.t)
    logger.info(f"Flowed {settings.samples} points for t = {settings.t}")

    rows = []
    for i in range(settings.samples):
        word = to_word(words[i])
        laps = int(march.laps[i])
        rows.append({
            'sample': i,
            'base_word': format_word(spec, word),
            'level': float(levels[i]),
            't': settings.t,
            'laps': laps,
            'end_word': format_word(spec, word[laps:]),
            'end_level': float(march.end_levels[i]),
            'flow_average': float(march.integrals[i]) / settings.t if settings.t > 0 else None,
        })
    store.write_csv('simulate.csv', rows, SIMULATE_COLUMNS)


def create_flow_commands(cli):
    """Register flow commands with the CLI group."""

    @cli.command('simulate')
    @experiment_options
    def simulate(config_path, out_dir, threads, log_file, log_level):
        """Sample the flow measure and flow each point for time t."""
        execute('simulate', run_simulate, config_path, out_dir, threads, log_file, log_level)
