#!/usr/bin/env python3
"""
ionstrobe — stroboscopic spin-motion simulator
==============================================
Command-line surface for scans, calibrations and stability statistics.

Pipeline:  RunConfig (scenario or file) → domain objects → simulate → fit/decode → OutputTable

Commands:
  ramsey-scan         φ-scan (optionally over an outer variable) of the full sequence
  pattern-scan        static-displacement grid probe + 2D wave-pattern fit
  trace-phase-space   per-ϑ0 fringe fits decoded into ⟨X⟩ and |⟨P⟩|
  squeeze-scan        ramsey-scan with one flash every two motional periods (+ back-action table)
  calibrate-train     tune the analysis train to a π/2 rotation; writes a tuning JSON
  build-tables        build (or load) the cached decode tables
  stability           windowed phase statistics of simulated phase-noise traces
  list-scenarios      print the shipped scenario slugs

Usage:
    python ionstrobe/cli/strobe_cli.py ramsey-scan --scenario ramsey-fringe
    python ionstrobe/cli/strobe_cli.py calibrate-train --config my_run.yml --out outputs/train.tsv
    python ionstrobe/cli/strobe_cli.py trace-phase-space --scenario phase-space-trace --threads 4
    python ionstrobe/cli/strobe_cli.py ramsey-scan --from-table outputs/ramsey-fringe_ramsey-scan.tsv
    python ionstrobe/cli/strobe_cli.py list-scenarios

Exit codes: 0 success, 2 config error, 3 numerical failure.

Environment variables (optional, also read from .env):
    IONSTROBE_LOG_LEVEL   overrides logging.level in ionstrobe/cli/config.yaml
"""

from __future__ import annotations

import argparse
import copy
import dataclasses
import logging
import math
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import yaml

# ---------------------------------------------------------------------------
# Path bootstrap: add project root to sys.path before importing ionstrobe
# ---------------------------------------------------------------------------
PROJECT_ROOT = Path(__file__).resolve().parent.parent.parent
if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

try:
    from dotenv import load_dotenv
    load_dotenv(PROJECT_ROOT / ".env")
except ImportError:
    pass

from ionstrobe.calibration.calib_fit import (
    TrainTuning,
    apply_tuning,
    fit_records,
    fit_wave_pattern,
    ideal_rabi_scale,
    tune_pulse_train,
)
from ionstrobe.calibration.decode_tables import (
    DecodeTables,
    build_decode_tables,
    decode_observables,
    default_phi_grid,
    load_decode_tables,
    noise_floor_estimate,
    referenced_fit,
    save_decode_tables,
)
from ionstrobe.cli.output_table import OutputTable, config_from_table, fmt_number
from ionstrobe.cli.run_config import (
    build_alpha_grid,
    build_noise_models,
    build_pattern_field,
    build_phi_grid,
    build_scan,
    build_sequence_spec,
    build_units,
    config_hash,
    config_section,
    load_run_config,
    with_seed,
)
from ionstrobe.dynamics.dynamics import train_duration
from ionstrobe.hilbert.hilbert_core import CoherentAmp
from ionstrobe.sequence.sequence_engine import (
    PatternField,
    ScanSpec,
    SequenceSpec,
    pattern_grid,
    run_scan,
    sample_detection,
    scan_table_rows,
    static_pattern_probe,
)
from ionstrobe.shared.errors import ConfigError, DecodeError, FitError, NumericalError
from ionstrobe.shared.scenario_utils import _list_scenarios, _load_scenario
from ionstrobe.shared.utils import load_json, save_json, setup_logging, wrap_phase
from ionstrobe.stability.stability_sim import PhaseTrace, simulate_phase_trace, stability_report

log = logging.getLogger("ionstrobe.cli")

# ---------------------------------------------------------------------------
# Constants
# ---------------------------------------------------------------------------
DEFAULT_TOOL_CONFIG = Path(__file__).parent / "config.yaml"
NM = 1e-9
ZN_US = 1e-27                   # 1 zN·µs in kg·m/s
TABLE_SECTIONS = ("hilbert", "mode", "units", "drive", "train", "sync", "dephasing", "decode")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

Command = Callable[..., OutputTable]


# ===========================================================================
# Shared plumbing
# ===========================================================================

def load_tool_config(path: Path = DEFAULT_TOOL_CONFIG) -> dict:
    """Paths, logging and thread defaults for the CLI itself."""
    with open(path, encoding="utf-8") as f:
        return yaml.safe_load(f) or {}


def _project_path(value) -> Path:
    path = Path(value)
    return path if path.is_absolute() else PROJECT_ROOT / path


def _sibling(out: Path, suffix: str) -> Path:
    return out.with_name(out.name + suffix)


def load_tuning(path: Path) -> TrainTuning:
    data = load_json(path)
    if not data:
        raise ConfigError(f"tuning file {path} is missing or empty", key="train.tuning_file")
    names = {f.name for f in dataclasses.fields(TrainTuning)}
    return TrainTuning(**{k: v for k, v in data.items() if k in names})


def resolve_sequence_spec(cfg: dict) -> SequenceSpec:
    """
    SequenceSpec with the analysis train settled.

    Precedence: train.tuning_file, then train.auto_tune, then
    train.rabi_scale (or the carrier estimate when null).
    """
    t = cfg["train"]
    if t["tuning_file"]:
        path = _project_path(t["tuning_file"])
        log.info(f"→ Train tuning from {path}")
        return build_sequence_spec(cfg, tuning=load_tuning(path))
    if t["auto_tune"]:
        raw = build_sequence_spec(cfg, scaled=False)
        tuning = tune_pulse_train(raw.without_excitation(), tol=t["tune_tol"], method=t["tune_method"])
        return build_sequence_spec(cfg, tuning=tuning)
    return build_sequence_spec(cfg)


def _outer_column(outer_var: str) -> tuple[str, str]:
    return ("outer", "rad" if outer_var in ("theta0", "zeta0") else "1")


def _shots(cfg: dict) -> Optional[int]:
    det = cfg["detection"]
    return det["shots"] if det["mode"] == "shots" else None


# ===========================================================================
# ramsey-scan / squeeze-scan
# ===========================================================================

def _drift_trace(cfg: dict, n_points: int) -> PhaseTrace:
    """Drift trace with two samples per scan point (measurement, reference)."""
    model = next(iter(build_noise_models(cfg).values()))
    duration = max(2 * n_points, 10) * model.sample_interval
    return simulate_phase_trace(model, duration, seed=cfg["detection"]["base_seed"])


def _reference_fringe(spec: SequenceSpec, threads: int):
    """Undrifted analytic α = 0 fringe the interleaved references are read against."""
    grid = np.linspace(0.0, 2 * math.pi, 24, endpoint=False)
    records = run_scan(ScanSpec(phi_grid=grid), spec.without_excitation(), threads=threads)
    return fit_records(records)


def _fringe_summary(table: OutputTable, records, scan: ScanSpec, shots: Optional[int]) -> None:
    n_phi = len(scan.phi_grid)
    if n_phi < 5 or np.ptp(scan.phi_grid) < math.pi:
        return
    for i, outer in enumerate(scan.outer_grid):
        try:
            fit = fit_records(records[i * n_phi:(i + 1) * n_phi], shots=shots)
        except FitError as exc:
            log.warning(f"fringe fit skipped at outer={outer:.6g}: {exc}")
            continue
        table.add_summary(
            f"fit[outer={fmt_number(outer)}]",
            f"offset={fmt_number(fit.offset)} contrast={fmt_number(fit.contrast)} "
            f"phi0_rad={fmt_number(fit.phase)} identifiable={int(fit.phase_identifiable)}",
        )


def _scan_table(cfg: dict, threads: int) -> OutputTable:
    spec = resolve_sequence_spec(cfg)
    scan = build_scan(cfg)
    drift = _drift_trace(cfg, scan.n_points) if cfg["scan"]["inject_drift"] else None
    reference_fit = _reference_fringe(spec, threads) if scan.interleave_reference else None

    records = run_scan(scan, spec, drift=drift, reference_fit=reference_fit, threads=threads)

    columns = [_outer_column(scan.outer_var), ("phi_rad", "rad"), ("p_down", "1"),
               ("p_down_sem", "1"), ("sigma_z", "1"), ("delta_n", "1")]
    rows = scan_table_rows(records)
    if scan.interleave_reference:
        columns.append(("drift_rad", "rad"))
        rows = np.column_stack([rows, [r.drift_estimate for r in records]])

    table = OutputTable(columns, rows, config=cfg)
    table.add_summary("outer_var", scan.outer_var)
    table.add_summary("train_duration_us", train_duration(spec.analysis) * 1e6)
    _fringe_summary(table, records, scan, _shots(cfg))
    return table


def cmd_ramsey_scan(cfg: dict, out: Optional[Path] = None, threads: int = 1, tables_dir=None) -> OutputTable:
    """outer × φ scan of the full sequence; one row per grid point, outer-major."""
    table = _scan_table(cfg, threads)
    log.info(f"ramsey-scan: {len(table.rows)} rows")
    return table


def backaction_table(table: OutputTable) -> OutputTable:
    """δ⟨n⟩ at every other φ of a scan table."""
    phis = np.unique(table.column("phi_rad"))
    keep = np.isin(table.column("phi_rad"), phis[::2])
    columns = [table.columns[0], ("phi_rad", "rad"), ("delta_n", "1")]
    rows = np.column_stack([table.rows[keep, 0], table.column("phi_rad")[keep], table.column("delta_n")[keep]])
    return OutputTable(columns, rows, config=table.config, summary=[("source", "back-action at every other phi")])


def cmd_squeeze_scan(cfg: dict, out: Optional[Path] = None, threads: int = 1, tables_dir=None) -> OutputTable:
    """ramsey-scan with Δt forced to two motional periods; also writes <out>.backaction."""
    cfg = copy.deepcopy(cfg)
    cfg["train"]["cycles_per_flash"] = 2
    cfg["train"]["cycle_ns"] = None
    table = _scan_table(cfg, threads)
    back = backaction_table(table)
    if out is not None:
        back.write(_sibling(Path(out), ".backaction"))
    log.info(f"squeeze-scan: {len(table.rows)} rows, {len(back.rows)} back-action rows")
    return table


# ===========================================================================
# pattern-scan
# ===========================================================================

PATTERN_COLUMNS = [("x_nm", "nm"), ("z_nm", "nm"), ("p_down", "1"), ("p_down_sem", "1"), ("residual", "1")]


def cmd_pattern_scan(cfg: dict, out: Optional[Path] = None, threads: int = 1, tables_dir=None) -> OutputTable:
    """Static-displacement grid probe and 2D wave-pattern fit."""
    p, det = cfg["pattern"], cfg["detection"]
    field = build_pattern_field(cfg)
    x, z = pattern_grid(p["extent_nm"] * NM, p["grid_num"])
    p_true = np.atleast_1d(static_pattern_probe(x, z, field))
    shots = _shots(cfg)
    if shots is not None:
        drawn = np.array([sample_detection(pt, shots, det["base_seed"] + i) for i, pt in enumerate(p_true)])
        mean, sem = drawn[:, 0], drawn[:, 1]
    else:
        mean, sem = p_true, np.zeros_like(p_true)

    try:
        fit = fit_wave_pattern(np.column_stack([x, z, mean, sem]), bootstrap=p["bootstrap"],
                               seed=det["base_seed"], shots=shots)
    except FitError as exc:
        if out is None:
            raise
        failed = _sibling(Path(out), ".failed.tsv")
        # no fitted model: residual is measured against the pattern baseline ½
        rows = np.column_stack([x / NM, z / NM, mean, sem, mean - 0.5])
        OutputTable(PATTERN_COLUMNS, rows, config=cfg, summary=[("error", str(exc))]).write(failed)
        raise FitError(f"{exc} (data and residual map: {failed})") from exc

    fitted = PatternField(fit.wavelength, fit.rotation, fit.phase_origin, fit.amplitude)
    residual = mean - np.atleast_1d(static_pattern_probe(x, z, fitted))
    table = OutputTable(PATTERN_COLUMNS, np.column_stack([x / NM, z / NM, mean, sem, residual]), config=cfg)
    table.add_summary("wavelength_nm", fit.wavelength / NM)
    table.add_summary("wavelength_err_nm", fit.wavelength_err / NM)
    table.add_summary("rotation_rad", fit.rotation)
    table.add_summary("rotation_err_rad", fit.rotation_err)
    table.add_summary("phase_origin_rad", fit.phase_origin)
    table.add_summary("amplitude", fit.amplitude)
    table.add_summary("residual_rms", fit.residual_rms)
    table.add_summary("bootstrap_samples", fit.bootstrap_samples)
    log.info(
        f"pattern-scan: λ={fit.wavelength / NM:.3f}({fit.wavelength_err / NM:.3f}) nm, "
        f"θ={fit.rotation:.4f}({fit.rotation_err:.4f}) rad"
    )
    return table


# ===========================================================================
# calibrate-train
# ===========================================================================

TUNING_COLUMNS = [("rabi_scale", "1"), ("phase_step_rad", "rad"), ("flash_scale", "1"),
                  ("achieved_sigma_z", "1"), ("n_evals", "1"), ("train_duration_us", "us"),
                  ("rabi_hz", "Hz")]


def cmd_calibrate_train(cfg: dict, out: Optional[Path] = None, threads: int = 1, tables_dir=None) -> OutputTable:
    """Tune the analysis train to π/2 at α = 0 and write the TrainTuning JSON."""
    t = cfg["train"]
    raw = build_sequence_spec(cfg, scaled=False).without_excitation()
    tuning = tune_pulse_train(raw, tol=t["tune_tol"], method=t["tune_method"])
    tuned = apply_tuning(raw, tuning)
    duration = train_duration(tuned.analysis)

    row = [tuning.rabi_scale, tuning.phase_step, tuning.flash_scale, tuning.achieved_sigma_z,
           tuning.n_evals, duration * 1e6, tuned.analysis.drive.rabi / (2 * math.pi)]
    table = OutputTable(TUNING_COLUMNS, [row], config=cfg)
    table.add_summary("train_duration_us", duration * 1e6)
    table.add_summary("carrier_rabi_scale", ideal_rabi_scale(raw.analysis))
    table.add_summary("method", tuning.method)

    target = _project_path(t["tuning_file"]) if t["tuning_file"] else (
        _sibling(Path(out), ".tuning.json") if out is not None else None
    )
    if target is not None:
        summary = dataclasses.asdict(tuning)
        summary.update(train_duration_us=duration * 1e6, config_sha256=config_hash(cfg))
        save_json(summary, target, logger=log)
        table.add_summary("tuning_file", target.name)
        log.info(f"→ Tuning written → {target}")
    return table


# ===========================================================================
# build-tables / trace-phase-space
# ===========================================================================

def tables_key(cfg: dict, spec: SequenceSpec) -> str:
    """Cache key: the table-relevant config sections plus the settled train."""
    train = spec.analysis
    subset = {k: cfg[k] for k in TABLE_SECTIONS}
    subset["settled_train"] = {
        "rabi": train.drive.rabi,
        "phase_step": train.phase_step,
        "flash_dur": train.flash_dur,
        "cycle_dur": train.cycle_dur,
        "sample_seed": spec.sample_seed if spec.n_th_samples else 0,
    }
    return config_hash(subset)


def get_decode_tables(
    cfg: dict,
    spec: SequenceSpec,
    tables_dir: Optional[Path],
    threads: int = 1,
) -> tuple[DecodeTables, Optional[Path]]:
    """Load cached tables for this config, or build and cache them."""
    path = Path(tables_dir) / f"{tables_key(cfg, spec)}.tsv" if tables_dir is not None else None
    if path is not None and path.exists():
        log.info(f"→ Decode tables from cache {path.name}")
        return load_decode_tables(path), path
    with config_section("decode"):
        tables = build_decode_tables(
            spec.without_excitation(),
            build_alpha_grid(cfg),
            build_units(cfg),
            phi_grid=default_phi_grid(cfg["decode"]["phi_num"]),
            threads=threads,
        )
    if path is not None:
        save_decode_tables(tables, path)
        log.info(f"→ Decode tables cached → {path}")
    return tables, path


def cmd_build_tables(cfg: dict, out: Optional[Path] = None, threads: int = 1, tables_dir=None) -> OutputTable:
    """Decode tables as an OutputTable, plus the noise floor when detection.mode is shots."""
    spec = resolve_sequence_spec(cfg)
    tables, _ = get_decode_tables(cfg, spec, tables_dir, threads)

    pos = np.column_stack([np.zeros_like(tables.pos_x), tables.pos_x / NM, np.zeros_like(tables.pos_x),
                           tables.pos_phi0, tables.pos_contrast])
    mom = np.column_stack([np.ones_like(tables.mom_p), np.zeros_like(tables.mom_p), tables.mom_p / ZN_US,
                           np.full_like(tables.mom_p, np.nan), tables.mom_contrast])
    columns = [("branch", "1"), ("X_nm", "nm"), ("P_zNus", "zN*us"), ("phi0_rad", "rad"), ("contrast", "1")]
    table = OutputTable(columns, np.vstack([pos, mom]), config=cfg)
    table.add_summary("tables_key", tables_key(cfg, spec))
    table.add_summary("phase_ref_rad", tables.phase_ref)
    table.add_summary("contrast_ref", tables.contrast_ref)

    shots = _shots(cfg)
    if shots is not None:
        with config_section("noise_floor"):
            floor = noise_floor_estimate(spec, tables, shots, cfg["noise_floor"]["repeats"],
                                         seed=cfg["detection"]["base_seed"])
        table.add_summary("noise_floor_x_nm", floor.sigma_x / NM)
        table.add_summary("noise_floor_p_zNus", floor.sigma_p / ZN_US)
        table.add_summary("noise_floor_skipped", floor.skipped)
    return table


def _outward_order(thetas: np.ndarray) -> list[int]:
    """Indices starting nearest ϑ0 = π/2, then upward, then downward."""
    start = int(np.argmin(np.abs(wrap_phase(thetas - math.pi / 2))))
    return list(range(start, len(thetas))) + list(range(start - 1, -1, -1))


def _decode_row(fit, tables: DecodeTables, x_hint: float) -> tuple[float, float, int]:
    try:
        decoded = decode_observables(fit, tables, x_hint=x_hint)
    except DecodeError as exc:
        log.warning(f"decode failed: {exc}")
        return math.nan, math.nan, 2
    return decoded.x, decoded.p_mag, int(decoded.clamped)


PHASE_SPACE_COLUMNS = [("theta0_rad", "rad"), ("phi0_rad", "rad"), ("contrast", "1"), ("X_nm", "nm"),
                       ("P_zNus", "zN*us"), ("reference", "1"), ("flag", "1")]


def cmd_trace_phase_space(cfg: dict, out: Optional[Path] = None, threads: int = 1, tables_dir=None) -> OutputTable:
    """
    Per-ϑ0 φ-scan → fit → decode, each with an interleaved α = 0 reference.

    flag: 0 decoded, 1 clamped at a table edge, 2 outside the table domain.
    Reference rows (reference = 1) are decoded directly against the tables.
    """
    s, det = cfg["scan"], cfg["detection"]
    if s["outer_var"] != "theta0":
        raise ConfigError("trace-phase-space scans ϑ0; set outer_var: theta0", key="scan.outer_var")
    spec = resolve_sequence_spec(cfg)
    tables, _ = get_decode_tables(cfg, spec, tables_dir, threads)
    alpha = cfg["state"]["alpha_abs"]
    thetas = np.asarray(s["outer_values"], dtype=float)
    phi = build_phi_grid(cfg)
    n_phi, shots = len(phi), _shots(cfg)

    def fringe(seq: SequenceSpec, seed: int):
        scan = ScanSpec(phi_grid=phi, shots=det["shots"], base_seed=seed, detection=det["mode"])
        return fit_records(run_scan(scan, seq, threads=threads), shots=shots)

    rows: dict[int, list] = {}
    hints = {}
    start = _outward_order(thetas)[0]
    for k in _outward_order(thetas):
        theta = float(thetas[k])
        base = det["base_seed"] + 2 * k * n_phi
        measured = fringe(replace(spec, excitation=CoherentAmp(alpha, theta)), base)
        reference = fringe(spec.without_excitation(), base + n_phi)

        neighbour = k - 1 if k > start else k + 1
        hint = hints.get(neighbour, 0.0) if k != start else 0.0
        x, p_mag, flag = _decode_row(referenced_fit(measured, reference, tables), tables, hint)
        hints[k] = x if math.isfinite(x) else hint
        x_ref, p_ref, flag_ref = _decode_row(reference, tables, 0.0)

        rows[k] = [
            [theta, measured.phase, measured.contrast, x / NM, p_mag / ZN_US, 0, flag],
            [theta, reference.phase, reference.contrast, x_ref / NM, p_ref / ZN_US, 1, flag_ref],
        ]
        log.debug(f"ϑ0={theta:.4f}: X={x / NM:.2f} nm, |P|={p_mag / ZN_US:.2f} zN·µs, flag={flag}")

    ordered = [row for k in range(len(thetas)) for row in rows[k]]
    table = OutputTable(PHASE_SPACE_COLUMNS, ordered, config=cfg)
    table.add_summary("alpha_abs", alpha)
    table.add_summary("tables_key", tables_key(cfg, spec))
    table.add_summary("flagged", sum(1 for r in ordered if r[6] != 0))
    log.info(f"trace-phase-space: {len(thetas)} ϑ0 values decoded")
    return table


# ===========================================================================
# stability
# ===========================================================================

STABILITY_COLUMNS = [("row", "1"), ("window_s", "s"), ("window_std_deg", "deg"), ("two_sample_deg", "deg"),
                     ("corrected_window_std_deg", "deg"), ("corrected_two_sample_deg", "deg")]


def trace_table(trace: PhaseTrace, cfg: dict) -> OutputTable:
    return OutputTable([("t_s", "s"), ("phase_rad", "rad")], np.column_stack([trace.t, trace.phase]), config=cfg)


def cmd_stability(cfg: dict, out: Optional[Path] = None, threads: int = 1, tables_dir=None) -> OutputTable:
    """Window statistics (degrees) per noise model; rows sorted by name, row i uses seed base_seed + i."""
    st, seed = cfg["stability"], cfg["detection"]["base_seed"]
    models = build_noise_models(cfg)
    rows = []
    table = OutputTable(STABILITY_COLUMNS, np.empty((0, len(STABILITY_COLUMNS))), config=cfg)
    for i, (name, model) in enumerate(models.items()):
        with config_section("stability"):
            report = stability_report(model, st["duration_s"], seed + i, st["windows_s"],
                                      st["reference_interval_s"])
        rows.extend([i, r.window_s] + [math.degrees(v) for v in r[1:]] for r in report)
        table.add_summary(f"row[{i}]", name)
        if st["write_traces"] and out is not None:
            trace = simulate_phase_trace(model, st["duration_s"], seed + i)
            trace_table(trace, cfg).write(_sibling(Path(out), f".{name}.trace"))
        log.info(f"stability row '{name}': " + ", ".join(
            f"{r.window_s:g} s → {math.degrees(r.two_sample_rad):.2f}°" for r in report))
    table.rows = np.asarray(rows, dtype=float).reshape(-1, len(STABILITY_COLUMNS))
    return table


# ===========================================================================
# CLI entry point
# ===========================================================================

COMMANDS: dict[str, Command] = {
    "ramsey-scan": cmd_ramsey_scan,
    "pattern-scan": cmd_pattern_scan,
    "trace-phase-space": cmd_trace_phase_space,
    "squeeze-scan": cmd_squeeze_scan,
    "calibrate-train": cmd_calibrate_train,
    "build-tables": cmd_build_tables,
    "stability": cmd_stability,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ionstrobe",
        description="Stroboscopic spin-motion simulator: scans, calibrations and stability statistics.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
examples:
  python ionstrobe/cli/strobe_cli.py ramsey-scan --scenario ramsey-fringe
  python ionstrobe/cli/strobe_cli.py pattern-scan --scenario wave-pattern --seed 7
  python ionstrobe/cli/strobe_cli.py calibrate-train --config my_run.yml --out outputs/train.tsv
  python ionstrobe/cli/strobe_cli.py list-scenarios

exit codes:
  0 success, 2 config error, 3 numerical failure
        """,
    )
    parser.add_argument("command", choices=sorted(COMMANDS) + ["list-scenarios"])
    source = parser.add_mutually_exclusive_group()
    source.add_argument("--config", type=Path, help="RunConfig YAML file")
    source.add_argument("--scenario", help="Shipped scenario slug (see list-scenarios)")
    source.add_argument("--from-table", type=Path, help="Re-run the effective config echoed in an output table")
    parser.add_argument("--out", type=Path, help="Output table path (default: outputs/<label>_<command>.tsv)")
    parser.add_argument("--seed", type=int, help="Overrides detection.base_seed")
    parser.add_argument("--threads", type=int, help="Worker threads for scans (default from config.yaml)")
    parser.add_argument(
        "--tool-config",
        type=Path,
        default=DEFAULT_TOOL_CONFIG,
        help=f"CLI settings YAML (default: {DEFAULT_TOOL_CONFIG})",
    )
    return parser


def _load_source(args) -> tuple[dict, str]:
    if args.scenario:
        return load_run_config(_load_scenario(args.scenario)), args.scenario
    if args.from_table:
        return load_run_config(config_from_table(args.from_table)), args.from_table.stem
    if args.config:
        return load_run_config(args.config), args.config.stem
    return load_run_config(), "defaults"


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    tool = load_tool_config(args.tool_config)
    log_cfg = tool.get("logging", {})
    level = os.environ.get("IONSTROBE_LOG_LEVEL") or log_cfg.get("level", "INFO")
    log_file = _project_path(log_cfg["file"]) if log_cfg.get("file") else None
    setup_logging(level=level, log_file=log_file)

    if args.command == "list-scenarios":
        for slug in _list_scenarios():
            print(slug)
        return EXIT_OK

    paths = tool.get("paths", {})
    try:
        cfg, label = _load_source(args)
        cfg = with_seed(cfg, args.seed)
        out = args.out or _project_path(paths.get("outputs_dir", "outputs")) / f"{label}_{args.command}.tsv"
        tables_dir = _project_path(paths.get("tables_dir", "data/tables"))
        threads = args.threads or int(tool.get("threads", 1))
        log.info(
            f"→ {args.command} ({label}): config {config_hash(cfg)[:12]}, "
            f"seed {cfg['detection']['base_seed']}, {threads} thread(s)"
        )
        table = COMMANDS[args.command](cfg, out=out, threads=threads, tables_dir=tables_dir)
        table.write(out)
    except ConfigError as exc:
        log.error(f"Config error: {exc}")
        return EXIT_CONFIG
    except NumericalError as exc:
        log.error(f"Numerical failure: {exc}")
        return EXIT_NUMERICAL

    log.info(f"→ Table written → {out} ({len(table.rows)} rows)")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
