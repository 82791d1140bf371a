#!/usr/bin/env python3
"""
Output-directory lock.

A run writes its PID into `<out>/.thermoflow.pid` before producing
artifacts and removes it afterwards. A lock whose PID no longer exists is
stale and gets taken over.
"""

import logging
import os
from pathlib import Path
from typing import Optional

import psutil

logger = logging.getLogger(__name__)

LOCK_NAME = '.thermoflow.pid'


class LockBusy(Exception):
    """Another live process holds the output directory lock."""
    pass


class RunLock:
    """Exclusive claim on one output directory, usable as a context manager."""

    def __init__(self, out_dir):
        self.out_dir = Path(out_dir)
        self.lock_file = self.out_dir / LOCK_NAME
        self.pid = os.getpid()

    def holder(self) -> Optional[int]:
        """PID written in the lock file, or None if there is no readable lock."""
        try:
            text = self.lock_file.read_text().strip()
        except OSError:
            return None
        return int(text) if text.isdigit() else None

    def acquire(self) -> bool:
        """
        Claim the directory.

        Returns:
            False when a different live process holds the lock
        """
        holder = self.holder()
        if holder == self.pid:
            return True
        if holder is not None and psutil.pid_exists(holder):
            logger.info(f"🔒 {self.out_dir} is in use by PID {holder}")
            return False
        if self.lock_file.exists():
            logger.info(f"🧹 Taking over stale lock in {self.out_dir} (PID {holder} is gone)")
            self.lock_file.unlink(missing_ok=True)
        return self._claim()

    def _claim(self) -> bool:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        try:
            # O_EXCL: a concurrent claim between the check and here loses
            fd = os.open(self.lock_file, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            logger.info(f"🔒 Lost the race for {self.out_dir}")
            return False
        with os.fdopen(fd, 'w') as f:
            f.write(str(self.pid))
        logger.debug(f"🔒 Locked {self.out_dir} for PID {self.pid}")
        return True

    def release(self):
        """Drop the lock if this process holds it; other holders are left alone."""
        holder = self.holder()
        if holder is None:
            return
        if holder != self.pid:
            logger.warning(f"⚠️ Not releasing {self.lock_file}: held by PID {holder}")
            return
        self.lock_file.unlink(missing_ok=True)
        logger.debug(f"🔓 Unlocked {self.out_dir}")

    def __enter__(self) -> 'RunLock':
        if not self.acquire():
            raise LockBusy(f"output directory {self.out_dir} is locked by another run")
        return self

    def __exit__(self, exc_type, exc, tb):
        self.release()
        return False
