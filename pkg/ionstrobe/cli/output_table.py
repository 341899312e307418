"""
OutputTable — the plain-text result format of every command.

    # outer[rad] phi_rad[rad] p_down[1] ...
    0 0 0.948730468750 ...
    ...
    # config_sha256: <hex>
    # seed: 0
    # summary: contrast = 0.8972
    # effective_config:
    #   detection:
    #     base_seed: 0
    ...

Numbers use 12 significant digits, so the same config and seed give a
byte-identical file. The effective config is echoed as YAML in the footer;
config_from_table reads it back for a re-run.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml

from ionstrobe.cli.run_config import config_hash, dump_config
from ionstrobe.shared.errors import ConfigError
from ionstrobe.shared.utils import save_text

CONFIG_MARKER = "# effective_config:"


def fmt_number(value: float) -> str:
    return f"{float(value):.12g}"


@dataclass(eq=False)
class OutputTable:
    columns: Sequence[tuple[str, str]]          # (name, unit)
    rows: np.ndarray
    config: dict = field(default_factory=dict)
    summary: list[tuple[str, str]] = field(default_factory=list)

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=float).reshape(-1, len(self.columns))

    @property
    def seed(self) -> Optional[int]:
        return self.config.get("detection", {}).get("base_seed")

    @property
    def column_names(self) -> list[str]:
        return [name for name, _ in self.columns]

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.column_names.index(name)]

    def add_summary(self, key: str, value) -> None:
        text = fmt_number(value) if isinstance(value, (float, np.floating)) else str(value)
        self.summary.append((key, text))

    def summary_value(self, key: str) -> str:
        for k, v in self.summary:
            if k == key:
                return v
        raise KeyError(key)

    def render(self) -> str:
        lines = ["# " + " ".join(f"{name}[{unit}]" for name, unit in self.columns)]
        lines.extend(" ".join(fmt_number(v) for v in row) for row in self.rows)
        if self.config:
            lines.append(f"# config_sha256: {config_hash(self.config)}")
            lines.append(f"# seed: {self.seed}")
        lines.extend(f"# summary: {k} = {v}" for k, v in self.summary)
        if self.config:
            lines.append(CONFIG_MARKER)
            lines.extend(f"#   {line}" for line in dump_config(self.config).splitlines())
        return "\n".join(lines) + "\n"

    def write(self, path: Path) -> Path:
        save_text(self.render(), Path(path))
        return Path(path)


def _parse_header(line: str) -> list[tuple[str, str]]:
    columns = []
    for token in line.lstrip("#").split():
        name, _, unit = token.partition("[")
        columns.append((name, unit.rstrip("]")))
    return columns


def parse_output_table(text: str) -> OutputTable:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("#"):
        raise ValueError("output table must start with a '# name[unit] …' header")
    columns = _parse_header(lines[0])
    rows, summary, config_lines = [], [], None
    for line in lines[1:]:
        if config_lines is not None:
            config_lines.append(line[4:] if line.startswith("#   ") else line.lstrip("#"))
        elif line == CONFIG_MARKER:
            config_lines = []
        elif line.startswith("# summary: "):
            key, _, value = line[len("# summary: "):].partition(" = ")
            summary.append((key, value))
        elif line.startswith("#") or not line.strip():
            continue
        else:
            rows.append([float(v) for v in line.split()])
    config = yaml.safe_load("\n".join(config_lines)) if config_lines else {}
    return OutputTable(columns, np.array(rows, dtype=float), config=config or {}, summary=summary)


def load_output_table(path: Path) -> OutputTable:
    return parse_output_table(Path(path).read_text(encoding="utf-8"))


def config_from_table(path: Path) -> dict:
    """The effective config echoed in a table footer."""
    table = load_output_table(path)
    if not table.config:
        raise ConfigError(f"{path} carries no effective config footer", key="config")
    return table.config
