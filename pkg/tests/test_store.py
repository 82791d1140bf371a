#!/usr/bin/env python3
"""
Unit tests for the RunStore class.
Tests CSV formatting, manifest contents and atomic writes.
"""

import pytest
import tempfile
import shutil
import math

import numpy as np

from store import MANIFEST_FILE, RunStore, format_value


@pytest.fixture
def temp_store():
    """Create a RunStore instance with a temporary directory for testing."""
    temp_dir = tempfile.mkdtemp()
    store = RunStore(out_dir=temp_dir)
    yield store
    # Cleanup after test
    shutil.rmtree(temp_dir)


class TestFormatValue:
    """CSV cell formatting."""

    @pytest.mark.parametrize('value, text', [
        (None, ''),
        (True, 'true'),
        (False, 'false'),
        (3, '3'),
        (0.1, '0.1'),
        (1 / 3, '0.3333333333333333'),
        (math.inf, 'inf'),
        (-math.inf, '-inf'),
        (math.nan, 'nan'),
        (np.float64(0.25), '0.25'),
        (np.int64(7), '7'),
        (np.bool_(True), 'true'),
        ('121', '121'),
    ])
    def test_format(self, value, text):
        assert format_value(value) == text

    def test_floats_round_trip(self):
        value = math.log(2) / 7
        assert float(format_value(value)) == value


class TestRunStore:
    """Test cases for RunStore functionality."""

    def test_write_csv(self, temp_store):
        """Header row first, then one line per row in column order."""
        rows = [{'t': 12.0, 'Z_exact': 0.5, 'extra': 'ignored'}, {'t': 14.0, 'Z_exact': None}]
        path = temp_store.write_csv('ld_empirical.csv', rows, ['t', 'Z_exact'])

        assert path.read_text() == 't,Z_exact\n12.0,0.5\n14.0,\n'
        assert temp_store.read_csv('ld_empirical.csv') == [
            {'t': '12.0', 'Z_exact': '0.5'}, {'t': '14.0', 'Z_exact': ''},
        ]

    def test_empty_table_has_header(self, temp_store):
        path = temp_store.write_csv('escape_flow.csv', [], ['n', 'R_flow'])
        assert path.read_text() == 'n,R_flow\n'

    def test_no_temporary_files_left(self, temp_store):
        temp_store.write_csv('pressure.csv', [{'pressure': 0.5}], ['pressure'])
        temp_store.write_manifest('pressure', 'ab' * 32, None, 1, 5, '1.0.0', '2026-01-01T00:00:00+00:00')
        assert temp_store.list_artifacts() == [MANIFEST_FILE, 'pressure.csv']

    def test_manifest(self, temp_store):
        """Manifest carries the run identity with sorted keys."""
        temp_store.write_manifest('theorem1', 'cd' * 32, 3, 4, 120, '1.0.0', '2026-01-01T00:00:00+00:00',
                                  extra={'note': 'x'})
        manifest = temp_store.read_manifest()

        assert manifest['command'] == 'theorem1'
        assert manifest['config_sha256'] == 'cd' * 32
        assert manifest['seed'] == 3
        assert manifest['threads'] == 4
        assert manifest['duration_ms'] == 120
        assert manifest['tool_version'] == '1.0.0'
        assert manifest['note'] == 'x'
        text = (temp_store.out_dir / MANIFEST_FILE).read_text()
        keys = [line.split('"')[1] for line in text.splitlines() if line.startswith('  "')]
        assert keys == sorted(keys)

    def test_overwrite_replaces_file(self, temp_store):
        temp_store.write_csv('pressure.csv', [{'pressure': 0.5}], ['pressure'])
        temp_store.write_csv('pressure.csv', [{'pressure': 0.75}], ['pressure'])
        assert temp_store.read_csv('pressure.csv') == [{'pressure': '0.75'}]
