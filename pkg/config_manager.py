#!/usr/bin/env python3
"""
Experiment configuration for thermoflow.
Loads the single JSON experiment document, fills block defaults and
builds the domain objects each command needs.
"""

import copy
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from escape import HoleSequence, nesting_violations
from sft_core import (
    LocallyConstantFunction, SftSpec, ThermoflowError, enumerate_words, parse_word, validate_sft,
)
from suspension import FlowObservable, RoofFunction, build_observable

logger = logging.getLogger(__name__)

COMMANDS = (
    'pressure', 'equilibrium', 'simulate', 'ld-bound', 'ld-empirical', 'theorem1',
    'escape-discrete', 'escape-flow', 'nested-check', 'theorem2',
)

REQUIRED_BLOCKS = {
    'pressure': ('sft', 'potential'),
    'equilibrium': ('sft', 'potential'),
    'simulate': ('sft', 'potential', 'roof', 'observable', 'simulate'),
    'ld-bound': ('sft', 'potential', 'roof', 'observable', 'deviations'),
    'ld-empirical': ('sft', 'potential', 'roof', 'observable', 'deviations'),
    'theorem1': ('sft', 'potential', 'roof', 'observable', 'deviations'),
    'escape-discrete': ('sft', 'potential', 'escape'),
    'escape-flow': ('sft', 'potential', 'roof', 'escape'),
    'nested-check': ('sft', 'potential', 'escape'),
    'theorem2': ('sft', 'potential', 'roof', 'escape'),
}

# (block, key) pairs that must be set for stochastic commands
REQUIRED_SEEDS = {
    'simulate': ('simulate', 'seed'),
    'ld-empirical': ('deviations', 'seed'),
    'theorem1': ('deviations', 'seed'),
    'escape-flow': ('escape', 'seed'),
    'theorem2': ('escape', 'seed'),
}


class ConfigError(Exception):
    """Configuration file is missing, unparsable or structurally invalid."""
    pass


# Raised by int(), float(), indexing and .items() on values of the wrong JSON type
MALFORMED_VALUE = (AttributeError, KeyError, TypeError, ValueError)


def guarded(label: str, build):
    """Run a builder; a malformed value becomes a ConfigError naming the block."""
    try:
        return build()
    except MALFORMED_VALUE as e:
        raise ConfigError(f"{label}: malformed value ({type(e).__name__}: {e})") from e


@dataclass(frozen=True)
class DeviationSettings:
    epsilon: float
    D: Union[float, str]
    t_grid: List[float]
    mc_samples: int
    seed: Optional[int]
    level_mode: str
    budget: int
    m_grid: List[int]
    epsilon_grid: List[float]
    default_D: float
    margin: float


@dataclass(frozen=True)
class EscapeSettings:
    t_grid: Union[str, List[float]]
    mc_samples: int
    seed: Optional[int]
    kappa_min: float


@dataclass(frozen=True)
class SimulateSettings:
    samples: int
    t: float
    seed: int


@dataclass
class ExperimentConfig:
    """Domain objects built from the blocks a command needs."""

    command: str
    sha256: str
    spec: SftSpec
    potential: LocallyConstantFunction
    roof: Optional[RoofFunction] = None
    observable: Optional[FlowObservable] = None
    holes: Optional[HoleSequence] = None
    deviations: Optional[DeviationSettings] = None
    escape: Optional[EscapeSettings] = None
    simulate: Optional[SimulateSettings] = None
    output_directory: str = 'results'
    formats: List[str] = field(default_factory=lambda: ['csv'])

    @property
    def seed(self) -> Optional[int]:
        block, _ = REQUIRED_SEEDS.get(self.command, (None, None))
        settings = {'simulate': self.simulate, 'deviations': self.deviations, 'escape': self.escape}.get(block)
        return getattr(settings, 'seed', None)


class ConfigManager:
    """Read-only JSON experiment configuration."""

    def __init__(self, config_file='experiment.json'):
        """Load and merge defaults; raises ConfigError when the file cannot be used."""
        self.config_file = Path(config_file)
        self.raw = self._read_bytes()
        self.config = self._load_config()

    def _read_bytes(self) -> bytes:
        try:
            return self.config_file.read_bytes()
        except IOError as e:
            raise ConfigError(f"cannot read config file {self.config_file}: {e}")

    def _load_config(self) -> Dict[str, Any]:
        """Parse the document and fill block defaults."""
        try:
            loaded = json.loads(self.raw.decode('utf-8'))
        except (json.JSONDecodeError, UnicodeDecodeError) as e:
            raise ConfigError(f"config file {self.config_file} is not valid JSON: {e}")
        if not isinstance(loaded, dict):
            raise ConfigError("config document must be a JSON object")

        config = copy.deepcopy(loaded)
        defaults = self._get_default_config()
        for block, values in defaults.items():
            if block == 'output':
                config[block] = {**values, **config.get(block, {})}
            elif block in config:
                if not isinstance(config[block], dict):
                    raise ConfigError(f"block {block!r} must be a JSON object")
                merged = copy.deepcopy(values)
                for key, value in config[block].items():
                    if isinstance(value, dict) and isinstance(merged.get(key), dict):
                        merged[key] = {**merged[key], **value}
                    else:
                        merged[key] = value
                config[block] = merged
        return config

    def _get_default_config(self) -> Dict[str, Any]:
        """Defaults for optional keys, merged into blocks that are present."""
        return {
            "deviations": {
                "level_mode": "zero",
                "budget": 2 ** 24,
                "mc_samples": 0,
                "fit": {"m_grid": [4, 6, 8, 10, 12], "epsilon_grid": [0.1, 0.2, 0.3],
                        "default_D": 1.0, "margin": 0.1},
            },
            "escape": {"t_grid": "auto", "kappa_min": 0.0, "period": 0, "mc_samples": 100_000},
            "output": {"directory": "results", "formats": ["csv"]},
        }

    def get(self, key, default=None):
        """Get a configuration block."""
        return self.config.get(key, default)

    def get_all(self):
        """Get the merged configuration."""
        return copy.deepcopy(self.config)

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.raw).hexdigest()

    def block(self, name: str) -> Dict[str, Any]:
        """A required block; ConfigError naming it when absent."""
        value = self.config.get(name)
        if value is None:
            raise ConfigError(f"missing {name} block")
        if not isinstance(value, dict):
            raise ConfigError(f"block {name!r} must be a JSON object")
        return value

    # ------------------------------------------------------------------
    # Builders
    # ------------------------------------------------------------------

    def build_spec(self) -> SftSpec:
        sft = self.block('sft')
        try:
            transition = sft['transition']
            theta = sft['theta']
        except KeyError as e:
            raise ConfigError(f"sft block is missing {e}")
        spec = validate_sft(transition, theta)
        declared = sft.get('alphabet_size')
        if declared is not None and declared != spec.alphabet_size:
            raise ConfigError(f"alphabet_size {declared} does not match a {spec.alphabet_size}x{spec.alphabet_size} matrix")
        return spec

    def _table_function(self, name: str, spec: SftSpec) -> LocallyConstantFunction:
        block = self.block(name)
        if 'constant' in block:
            return LocallyConstantFunction.constant(spec, float(block['constant']), int(block.get('depth', 1)))
        if 'table' not in block or 'depth' not in block:
            raise ConfigError(f"{name} block needs depth and table, or constant")
        if not isinstance(block['table'], dict):
            raise ConfigError(f"{name} table must map words to numbers")
        return LocallyConstantFunction.from_table(spec, int(block['depth']), block['table'])

    def build_potential(self, spec: SftSpec) -> LocallyConstantFunction:
        return self._table_function('potential', spec)

    def build_roof(self, spec: SftSpec) -> RoofFunction:
        return RoofFunction(base=self._table_function('roof', spec))

    def build_observable(self, spec: SftSpec, roof: RoofFunction) -> FlowObservable:
        block = self.block('observable')
        if 'constant' in block:
            depth = int(block.get('depth', 1))
            return build_observable(spec, roof, {w: [float(block['constant'])] for w in enumerate_words(spec, depth)},
                                    depth=depth, degree=0)
        if 'coefficients' not in block:
            raise ConfigError("observable block needs coefficients or constant")
        if not isinstance(block['coefficients'], dict):
            raise ConfigError("observable coefficients must map words to coefficient lists")
        depth = block.get('depth')
        degree = block.get('degree')
        return build_observable(spec, roof, block['coefficients'],
                                depth=int(depth) if depth is not None else None,
                                degree=int(degree) if degree is not None else None)

    def build_holes(self, spec: SftSpec) -> HoleSequence:
        block = self.block('escape')
        if 'z' not in block:
            raise ConfigError("escape block is missing z")
        z = parse_word(spec, block['z'])
        period = int(block.get('period', 0))
        mode = block.get('hole_mode', 'cylinders_around_z')
        if mode == 'cylinders_around_z':
            if 'n_range' not in block:
                raise ConfigError("escape block with cylinders_around_z needs n_range")
            lo, hi = block['n_range']
            return HoleSequence.cylinders_around(spec, z, (int(lo), int(hi)), period)
        if mode == 'explicit':
            if 'holes' not in block:
                raise ConfigError("escape block with explicit holes needs holes")
            return HoleSequence.from_word_lists(spec, z, block['holes'], period)
        raise ConfigError(f"unknown hole_mode {mode!r}")

    def deviation_settings(self) -> DeviationSettings:
        block = self.block('deviations')
        fit = block.get('fit', {})
        try:
            epsilon = float(block['epsilon'])
            t_grid = [float(t) for t in block['t_grid']]
        except KeyError as e:
            raise ConfigError(f"deviations block is missing {e}")
        D = block.get('D', 'fit')
        if D != 'fit':
            D = float(D)
            if D <= 0:
                raise ConfigError(f"D must be positive or \"fit\", got {D}")
        if epsilon <= 0:
            raise ConfigError(f"epsilon must be positive, got {epsilon}")
        if block['level_mode'] not in ('zero', 'nu'):
            raise ConfigError(f"level_mode must be \"zero\" or \"nu\", got {block['level_mode']!r}")
        seed = block.get('seed')
        return DeviationSettings(
            epsilon=epsilon, D=D, t_grid=t_grid, mc_samples=int(block['mc_samples']),
            seed=int(seed) if seed is not None else None, level_mode=block['level_mode'],
            budget=int(block['budget']), m_grid=[int(m) for m in fit['m_grid']],
            epsilon_grid=[float(e) for e in fit['epsilon_grid']], default_D=float(fit['default_D']),
            margin=float(fit['margin']),
        )

    def escape_settings(self) -> EscapeSettings:
        block = self.block('escape')
        t_grid = block['t_grid']
        if t_grid != 'auto':
            t_grid = [float(t) for t in t_grid]
        mc_samples = int(block['mc_samples'])
        if mc_samples < 1:
            raise ConfigError(f"escape mc_samples must be at least 1, got {mc_samples}")
        seed = block.get('seed')
        return EscapeSettings(t_grid=t_grid, mc_samples=mc_samples,
                              seed=int(seed) if seed is not None else None,
                              kappa_min=float(block['kappa_min']))

    def simulate_settings(self) -> SimulateSettings:
        block = self.block('simulate')
        try:
            return SimulateSettings(samples=int(block['samples']), t=float(block['t']), seed=int(block['seed']))
        except KeyError as e:
            raise ConfigError(f"simulate block is missing {e}")

    # ------------------------------------------------------------------

    def check_command(self, command: str):
        """Raise ConfigError when a block or seed the command needs is absent."""
        if command not in REQUIRED_BLOCKS:
            raise ConfigError(f"unknown command {command!r}")
        for name in REQUIRED_BLOCKS[command]:
            self.block(name)
        if command in REQUIRED_SEEDS:
            block, key = REQUIRED_SEEDS[command]
            if self.block(block).get(key) is None:
                raise ConfigError(f"{block} block needs a {key} for {command}")

    def experiment(self, command: str) -> ExperimentConfig:
        """
        Build everything `command` needs.

        Raises:
            ConfigError: missing blocks or seeds, or values of the wrong type
            ThermoflowError: values that fail domain validation
        """
        self.check_command(command)
        needed = REQUIRED_BLOCKS[command]
        spec = guarded('sft', self.build_spec)
        potential = guarded('potential', lambda: self.build_potential(spec))
        roof = guarded('roof', lambda: self.build_roof(spec)) if 'roof' in needed else None
        output = self.config['output']
        return ExperimentConfig(
            command=command, sha256=self.sha256, spec=spec, potential=potential, roof=roof,
            observable=guarded('observable', lambda: self.build_observable(spec, roof)) if 'observable' in needed else None,
            holes=guarded('escape', lambda: self.build_holes(spec)) if 'escape' in needed else None,
            deviations=guarded('deviations', self.deviation_settings) if 'deviations' in needed else None,
            escape=guarded('escape', self.escape_settings) if 'escape' in needed else None,
            simulate=guarded('simulate', self.simulate_settings) if 'simulate' in needed else None,
            output_directory=str(output.get('directory', 'results')),
            formats=list(output.get('formats', ['csv'])),
        )


def validate_config(config_path, command: Optional[str] = None) -> List[str]:
    """
    Structural and invariant validation without running anything.

    Returns:
        human-readable diagnostics; empty when the config is valid
    """
    diagnostics: List[str] = []
    try:
        manager = ConfigManager(config_path)
    except ConfigError as e:
        return [str(e)]

    if command is not None:
        try:
            manager.check_command(command)
        except ConfigError as e:
            diagnostics.append(str(e))

    def attempt(label: str, build):
        try:
            return guarded(label, build)
        except ConfigError as e:
            diagnostics.append(str(e) if str(e).startswith(label) else f"{label}: {e}")
        except ThermoflowError as e:
            diagnostics.append(f"{label}: {e}")
        return None

    if manager.get('sft') is None:
        diagnostics.append("missing sft block")
        return diagnostics
    spec = attempt('sft', manager.build_spec)
    if spec is None:
        return diagnostics

    if manager.get('potential') is not None:
        attempt('potential', lambda: manager.build_potential(spec))
    roof = None
    if manager.get('roof') is not None:
        roof = attempt('roof', lambda: manager.build_roof(spec))
    if manager.get('observable') is not None:
        if roof is None:
            diagnostics.append("observable: needs a valid roof block")
        else:
            attempt('observable', lambda: manager.build_observable(spec, roof))
    if manager.get('deviations') is not None:
        attempt('deviations', manager.deviation_settings)
    if manager.get('escape') is not None:
        holes = attempt('escape', lambda: manager.build_holes(spec))
        if holes is not None:
            for n in nesting_violations(holes):
                diagnostics.append(f"escape: I_{n + 1} is not nested in I_{n}")
        attempt('escape', manager.escape_settings)
    if manager.get('simulate') is not None:
        attempt('simulate', manager.simulate_settings)

    for message in diagnostics:
        logger.debug(f"Config diagnostic: {message}")
    return diagnostics
