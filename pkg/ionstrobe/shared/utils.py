"""
Shared utilities for all ionstrobe modules.
===========================================
Provides:
  - setup_logging  — package logger: console + rotating file, re-callable
  - load_json      — safe JSON loading
  - save_json      — atomic JSON write (temp file → rename)
  - save_text      — atomic text write (tables, decode tables)
  - ensure_dir     — mkdir -p helper
  - wrap_phase     — map angles into (−π, π]

Keep this file focused and stable; every command imports from here.
"""

import json
import logging
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Any, Optional

import numpy as np


# ---------------------------------------------------------------------------
# Logging
# ---------------------------------------------------------------------------

PACKAGE_LOGGER = "ionstrobe"
LOG_FORMAT = "%(asctime)s | %(levelname)-7s | %(module_path)-28s | %(message)s"
LOG_DATEFMT = "%Y-%m-%d %H:%M:%S"


class _ModuleFormatter(logging.Formatter):
    """Shows 'calibration.decode_tables' instead of 'ionstrobe.calibration.decode_tables'."""

    def format(self, record: logging.LogRecord) -> str:
        prefix = PACKAGE_LOGGER + "."
        record.module_path = record.name[len(prefix):] if record.name.startswith(prefix) else record.name
        return super().format(record)


def setup_logging(
    level: str = "INFO",
    log_file: Optional[Path] = None,
    name: str = PACKAGE_LOGGER,
) -> logging.Logger:
    """
    Configure the package logger: console on stderr plus an optional rotating file.

    Library modules log under "ionstrobe.*", so the one call in the CLI covers
    all of them. Calling again (one process, several commands) replaces the
    handlers instead of stacking them, so a new level or file takes effect.

    Args:
        level:    "DEBUG" | "INFO" | "WARNING" | "ERROR"
        log_file: If provided, also write to this file (10 MB × 5 backups).
        name:     Logger to configure; the package root by default.
    """
    log_level = getattr(logging, level.upper(), logging.INFO)
    logger = logging.getLogger(name)
    logger.setLevel(log_level)
    logger.propagate = False
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()

    fmt = _ModuleFormatter(LOG_FORMAT, datefmt=LOG_DATEFMT)
    handlers: list[logging.Handler] = [logging.StreamHandler()]
    if log_file:
        ensure_dir(Path(log_file).parent)
        handlers.append(RotatingFileHandler(log_file, maxBytes=10_000_000, backupCount=5, encoding="utf-8"))
    for handler in handlers:
        handler.setLevel(log_level)
        handler.setFormatter(fmt)
        logger.addHandler(handler)
    return logger


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def load_json(path: Path, logger: Optional[logging.Logger] = None) -> dict:
    """
    Load JSON from a file. Returns empty dict on missing file or parse error.
    """
    log = logger or logging.getLogger(__name__)
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError:
        return {}
    except json.JSONDecodeError as exc:
        log.warning(f"JSON parse error in {path}: {exc}. Returning empty dict.")
        return {}


def save_json(data: Any, path: Path, logger: Optional[logging.Logger] = None) -> None:
    """
    Atomically write data as pretty-printed JSON.

    Writes to a .tmp file first, then renames to the target path.
    """
    text = json.dumps(data, indent=2, ensure_ascii=False, default=str) + "\n"
    save_text(text, path, logger=logger)


def save_text(text: str, path: Path, logger: Optional[logging.Logger] = None) -> None:
    """Atomically write a text file (temp file → rename)."""
    log = logger or logging.getLogger(__name__)
    path = Path(path)
    ensure_dir(path.parent)

    tmp_path = path.with_name(path.name + ".tmp")
    try:
        with open(tmp_path, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        tmp_path.replace(path)
    except Exception as exc:
        log.error(f"Failed to write {path}: {exc}")
        if tmp_path.exists():
            tmp_path.unlink(missing_ok=True)
        raise


# ---------------------------------------------------------------------------
# Path helpers
# ---------------------------------------------------------------------------

def ensure_dir(path: Path) -> None:
    """Create directory (and all parents) if it doesn't already exist."""
    Path(path).mkdir(parents=True, exist_ok=True)


# ---------------------------------------------------------------------------
# Angles
# ---------------------------------------------------------------------------

def wrap_phase(angle):
    """Map an angle (scalar or array) into (−π, π]."""
    wrapped = -(np.mod(-np.asarray(angle, dtype=float) + np.pi, 2 * np.pi) - np.pi)
    return float(wrapped) if np.ndim(wrapped) == 0 else wrapped
