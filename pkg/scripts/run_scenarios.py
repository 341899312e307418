#!/usr/bin/env python3
"""
Run every shipped scenario through its command.

Usage:
    .venv/bin/python scripts/run_scenarios.py
    .venv/bin/python scripts/run_scenarios.py ramsey-fringe squeezed-vacuum --threads 4

Output:
    outputs/<scenario>_<command>.tsv   (plus .backaction / .tuning.json siblings)
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

# Bootstrap path so we can import from ionstrobe/
PROJECT_ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(PROJECT_ROOT))

from ionstrobe.cli.strobe_cli import main as strobe_main
from ionstrobe.shared.scenario_utils import _list_scenarios

# ---------------------------------------------------------------------------
# Scenario → command(s)
# ---------------------------------------------------------------------------

SCENARIO_COMMANDS = {
    "ramsey-fringe": ["ramsey-scan"],
    "wave-pattern": ["pattern-scan"],
    "displaced-fringes": ["calibrate-train", "ramsey-scan"],
    "phase-space-trace": ["build-tables", "trace-phase-space"],
    "theta-phi-grid": ["ramsey-scan"],
    "shot-noise-grid": ["ramsey-scan"],
    "squeezed-vacuum": ["squeeze-scan"],
    "phase-stability": ["stability"],
}


def main() -> None:
    parser = argparse.ArgumentParser(description="Run shipped ionstrobe scenarios.")
    parser.add_argument("scenarios", nargs="*", help="Scenario slugs (default: all)")
    parser.add_argument("--threads", type=int, default=1)
    args = parser.parse_args()

    slugs = args.scenarios or _list_scenarios()
    failures = []
    for slug in slugs:
        for command in SCENARIO_COMMANDS.get(slug, ["ramsey-scan"]):
            code = strobe_main([command, "--scenario", slug, "--threads", str(args.threads)])
            status = "✓" if code == 0 else f"✗ (exit {code})"
            print(f"  {status} {slug:<16} {command}")
            if code:
                failures.append((slug, command, code))

    print(f"\n{len(slugs)} scenario(s), {len(failures)} failure(s)\n")
    sys.exit(1 if failures else 0)


if __name__ == "__main__":
    main()
