#!/usr/bin/env python3
"""
Run artifact storage for thermoflow.
Writes CSV data files and the JSON run manifest into an output directory.
"""

import csv
import io
import json
import logging
import math
import os
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

MANIFEST_FILE = 'manifest.json'


def format_value(value: Any) -> str:
    """
    CSV cell text: shortest round-trip decimal for floats, inf/nan spelled
    out, booleans as true/false and missing values empty.
    """
    if value is None:
        return ''
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return 'nan'
        if math.isinf(value):
            return 'inf' if value > 0 else '-inf'
        return repr(value)
    return str(value)


class RunStore:
    """File-based artifact store for one output directory."""

    def __init__(self, out_dir='results'):
        """Initialize store with output directory."""
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)

    def _write_atomic(self, path: Path, text: str):
        """Write through a temporary sibling so readers never see a partial file."""
        temp = path.with_name(path.name + '.tmp')
        try:
            with open(temp, 'w', newline='') as f:
                f.write(text)
            os.replace(temp, path)
        except IOError as e:
            logger.error(f"Error writing {path}: {e}")
            if temp.exists():
                temp.unlink()
            raise

    def write_csv(self, name: str, rows: Iterable[Dict[str, Any]], columns: Sequence[str]) -> Path:
        """Write rows under a header row; keys outside `columns` are ignored."""
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator='\n')
        writer.writerow(columns)
        count = 0
        for row in rows:
            writer.writerow([format_value(row.get(column)) for column in columns])
            count += 1
        path = self.out_dir / name
        self._write_atomic(path, buffer.getvalue())
        logger.info(f"Saved {count} rows to {path}")
        return path

    def write_manifest(self, command: str, config_sha256: str, seed: Optional[int], threads: int,
                       duration_ms: int, tool_version: str, started_at: str,
                       extra: Optional[Dict[str, Any]] = None) -> Path:
        """Write manifest.json with sorted keys."""
        manifest = {
            'config_sha256': config_sha256,
            'command': command,
            'seed': seed,
            'threads': threads,
            'duration_ms': duration_ms,
            'tool_version': tool_version,
            'started_at': started_at,
        }
        if extra:
            manifest.update(extra)
        path = self.out_dir / MANIFEST_FILE
        self._write_atomic(path, json.dumps(manifest, indent=2, sort_keys=True) + '\n')
        logger.debug(f"Manifest written to {path}")
        return path

    def read_csv(self, name: str) -> List[Dict[str, str]]:
        """Rows of a CSV artifact as string dictionaries."""
        with open(self.out_dir / name, 'r', newline='') as f:
            return list(csv.DictReader(f))

    def read_manifest(self) -> Dict[str, Any]:
        with open(self.out_dir / MANIFEST_FILE, 'r') as f:
            return json.load(f)

    def list_artifacts(self) -> List[str]:
        """Names of the files in the output directory."""
        return sorted(p.name for p in self.out_dir.iterdir() if p.is_file())
