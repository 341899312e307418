"""
scenario_utils.py — Shared scenario discovery and loading.

Provides _load_scenario, _list_scenarios, SCENARIOS_DIR and DEFAULT_SCENARIO.

A scenario is a RunConfig shipped with the repo under
scenarios/<slug>/scenario.yml. Adding a new scenario requires only a new
directory; no code changes.
"""

from __future__ import annotations

import logging
from pathlib import Path

import yaml

from ionstrobe.shared.errors import ConfigError

log = logging.getLogger(__name__)

# ---------------------------------------------------------------------------
# Paths and defaults
# ---------------------------------------------------------------------------

# ionstrobe/shared/../..  ==  project root
_PROJECT_ROOT    = Path(__file__).resolve().parent.parent.parent
SCENARIOS_DIR    = _PROJECT_ROOT / "scenarios"

DEFAULT_SCENARIO = "ramsey-fringe"


# ---------------------------------------------------------------------------
# Scenario loading
# ---------------------------------------------------------------------------

def _list_scenarios() -> list[str]:
    """Return sorted list of available scenario slugs (subdirectory names)."""
    if not SCENARIOS_DIR.exists():
        return []
    return sorted(
        p.name for p in SCENARIOS_DIR.iterdir()
        if p.is_dir() and (p / "scenario.yml").exists()
    )


def _scenario_path(name: str) -> Path:
    return SCENARIOS_DIR / name / "scenario.yml"


def _load_scenario(name: str = DEFAULT_SCENARIO) -> dict:
    """Load a scenario RunConfig from scenarios/<name>/scenario.yml.

    A missing scenario is never replaced by the default.
    Raises ConfigError listing the available slugs.
    """
    path = _scenario_path(name)
    if not path.exists():
        available = ", ".join(_list_scenarios()) or "none"
        raise ConfigError(f"unknown scenario '{name}' (available: {available})", key="scenario")

    log.info(f"→ Scenario: '{name}' ({path})")
    data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"scenario file {path} is not a mapping", key="scenario")
    return data
