"""Tests: the ionstrobe command-line surface.

Commands run through main([...]) with configs, outputs and the decode-table
cache under tmp_path. Configs are kept small (Fock cutoff 40-64, cold mode)
so each command finishes quickly.
"""
import json
import math

import numpy as np
import pytest
import yaml

from ionstrobe.calibration.calib_fit import TrainTuning
from ionstrobe.cli import strobe_cli
from ionstrobe.cli.output_table import load_output_table
from ionstrobe.cli.run_config import load_run_config
from ionstrobe.cli.strobe_cli import (
    EXIT_CONFIG,
    EXIT_NUMERICAL,
    EXIT_OK,
    _outward_order,
    cmd_build_tables,
    load_tuning,
    main,
    resolve_sequence_spec,
)
from ionstrobe.shared.errors import ConfigError

SMALL = {"hilbert": {"fock_dim": 40}, "mode": {"n_th": 0.0}, "scan": {"phi_num": 9}}
X_UNIT_NM = 2 * 12.47           # 2·x_zpf at 1.3 MHz, 25 amu
P_UNIT_ZNUS = 2 * 4.228         # 2·p_zpf


def _merged(*parts: dict) -> dict:
    out: dict = {}
    for part in parts:
        for section, values in part.items():
            out.setdefault(section, {}).update(values)
    return out


@pytest.fixture
def tool_config(tmp_path):
    path = tmp_path / "tool.yml"
    path.write_text(yaml.safe_dump({
        "paths": {"outputs_dir": str(tmp_path / "outputs"), "tables_dir": str(tmp_path / "tables")},
        "logging": {"level": "WARNING", "file": ""},
        "threads": 1,
    }), encoding="utf-8")
    return path


@pytest.fixture
def run(tmp_path, tool_config):
    """run(command, cfg, out_name, *extra) → (exit code, out path)."""
    def _run(command: str, cfg: dict, out_name: str = "out.tsv", *extra: str):
        cfg_path = tmp_path / f"{out_name}.yml"
        cfg_path.write_text(yaml.safe_dump(cfg, sort_keys=False), encoding="utf-8")
        out = tmp_path / out_name
        code = main([command, "--config", str(cfg_path), "--out", str(out),
                     "--tool-config", str(tool_config), *extra])
        return code, out
    return _run


# ---------------------------------------------------------------------------
# ramsey-scan
# ---------------------------------------------------------------------------

def test_ramsey_scan_writes_table(run):
    code, out = run("ramsey-scan", SMALL)
    assert code == EXIT_OK
    table = load_output_table(out)
    assert table.column_names == ["outer", "phi_rad", "p_down", "p_down_sem", "sigma_z", "delta_n"]
    assert len(table.rows) == 9
    assert table.column("phi_rad")[-1] == pytest.approx(2 * math.pi)
    assert "identifiable=" in table.summary_value("fit[outer=0]")
    assert float(table.summary_value("train_duration_us")) == pytest.approx(23.077, abs=1e-3)


def test_shot_noise_runs_are_byte_identical(run):
    cfg = _merged(SMALL, {"detection": {"mode": "shots", "shots": 250, "base_seed": 3}})
    _, first = run("ramsey-scan", cfg, "first.tsv")
    _, second = run("ramsey-scan", cfg, "second.tsv")
    assert first.read_text(encoding="utf-8") == second.read_text(encoding="utf-8")


def test_seed_flag_overrides_config(run):
    cfg = _merged(SMALL, {"detection": {"mode": "shots", "shots": 250, "base_seed": 3}})
    _, plain = run("ramsey-scan", cfg, "plain.tsv")
    code, seeded = run("ramsey-scan", cfg, "seeded.tsv", "--seed", "5")
    assert code == EXIT_OK
    assert "# seed: 5\n" in seeded.read_text(encoding="utf-8")
    assert load_output_table(seeded).config["detection"]["base_seed"] == 5
    assert not np.array_equal(load_output_table(plain).column("p_down"), load_output_table(seeded).column("p_down"))


def test_rerun_from_table_is_identical(run, tmp_path, tool_config):
    cfg = _merged(SMALL, {"detection": {"mode": "shots", "shots": 100, "base_seed": 8}})
    _, first = run("ramsey-scan", cfg, "first.tsv")
    again = tmp_path / "again.tsv"
    code = main(["ramsey-scan", "--from-table", str(first), "--out", str(again),
                 "--tool-config", str(tool_config)])
    assert code == EXIT_OK
    assert again.read_text(encoding="utf-8") == first.read_text(encoding="utf-8")


def test_outer_scan_rows(run):
    cfg = _merged(SMALL, {"state": {"alpha_abs": 1.0},
                          "scan": {"phi_num": 5, "outer_var": "theta0", "outer_values": [0.0, 1.5707963267948966]}})
    code, out = run("ramsey-scan", cfg)
    assert code == EXIT_OK
    table = load_output_table(out)
    assert table.columns[0] == ("outer", "rad")
    assert np.allclose(table.column("outer"), [0.0] * 5 + [math.pi / 2] * 5)


def test_interleaved_reference_adds_drift_column(run):
    cfg = _merged(SMALL, {"scan": {"interleave_reference": True, "inject_drift": True},
                          "stability": {"drift_rate": 0.01}})
    code, out = run("ramsey-scan", cfg)
    assert code == EXIT_OK
    table = load_output_table(out)
    assert table.column_names[-1] == "drift_rad"
    assert np.all(np.isfinite(table.column("drift_rad")))


def test_unknown_key_exits_with_config_error(run):
    code, out = run("ramsey-scan", {"scan": {"phi_nmu": 3}})
    assert code == EXIT_CONFIG
    assert not out.exists()


def test_missing_config_file_exits_with_config_error(tmp_path, tool_config):
    code = main(["ramsey-scan", "--config", str(tmp_path / "absent.yml"), "--out", str(tmp_path / "x.tsv"),
                 "--tool-config", str(tool_config)])
    assert code == EXIT_CONFIG


# ---------------------------------------------------------------------------
# squeeze-scan
# ---------------------------------------------------------------------------

def test_squeeze_scan_writes_back_action(run):
    cfg = {
        "hilbert": {"fock_dim": 60},
        "mode": {"n_th": 0.0},
        "state": {"zeta_abs": 0.5},
        "scan": {"phi_num": 6, "outer_var": "zeta0", "outer_values": [0.0, 3.141592653589793]},
    }
    code, out = run("squeeze-scan", cfg, "squeeze.tsv")
    assert code == EXIT_OK
    assert len(load_output_table(out).rows) == 12
    back = load_output_table(out.with_name("squeeze.tsv.backaction"))
    assert back.column_names == ["outer", "phi_rad", "delta_n"]
    assert len(back.rows) == 6
    assert float(load_output_table(out).summary_value("train_duration_us")) == pytest.approx(46.154, abs=1e-3)


# ---------------------------------------------------------------------------
# pattern-scan
# ---------------------------------------------------------------------------

def test_pattern_scan_recovers_planted_pattern(run):
    code, out = run("pattern-scan", {"pattern": {"grid_num": 20}})
    assert code == EXIT_OK
    table = load_output_table(out)
    assert len(table.rows) == 400
    assert float(table.summary_value("wavelength_nm")) == pytest.approx(138.0, abs=0.1)
    assert float(table.summary_value("rotation_rad")) == pytest.approx(0.84, abs=0.002)


def test_pattern_scan_small_extent_fails_with_residual_map(run):
    code, out = run("pattern-scan", {"pattern": {"extent_nm": 50.0}}, "pattern.tsv")
    assert code == EXIT_NUMERICAL
    assert not out.exists()
    failed = load_output_table(out.with_name("pattern.tsv.failed.tsv"))
    assert len(failed.rows) == 26 * 26
    assert "extent insufficient" in failed.summary_value("error")


# ---------------------------------------------------------------------------
# calibrate-train and tuning files
# ---------------------------------------------------------------------------

def test_calibrate_train_writes_tuning_file(run, mocker):
    tuning = TrainTuning(phase_step=0.01, rabi_scale=1.08, achieved_sigma_z=2e-4, n_evals=17)
    tuner = mocker.patch("ionstrobe.cli.strobe_cli.tune_pulse_train", return_value=tuning)
    code, out = run("calibrate-train", SMALL, "train.tsv")
    assert code == EXIT_OK
    assert tuner.call_count == 1
    assert tuner.call_args.args[0].excitation is None

    saved = json.loads(out.with_name("train.tsv.tuning.json").read_text(encoding="utf-8"))
    assert saved["rabi_scale"] == 1.08
    assert saved["n_evals"] == 17
    assert len(saved["config_sha256"]) == 64

    table = load_output_table(out)
    assert table.column("rabi_scale")[0] == 1.08
    assert table.column("rabi_hz")[0] == pytest.approx(0.3e6 * 1.08)


def test_tuning_file_settles_the_train(tmp_path):
    path = tmp_path / "tuning.json"
    path.write_text(json.dumps({"phase_step": 0.02, "rabi_scale": 1.1, "achieved_sigma_z": 1e-4,
                                "train_duration_us": 23.08}), encoding="utf-8")
    assert load_tuning(path).rabi_scale == 1.1
    cfg = load_run_config(_merged(SMALL, {"train": {"tuning_file": str(path)}}))
    spec = resolve_sequence_spec(cfg)
    assert spec.analysis.drive.rabi == pytest.approx(2 * math.pi * 0.3e6 * 1.1)
    assert spec.analysis.phase_step == 0.02


def test_missing_tuning_file_is_config_error(tmp_path):
    with pytest.raises(ConfigError) as excinfo:
        load_tuning(tmp_path / "absent.json")
    assert excinfo.value.key == "train.tuning_file"


def test_auto_tune_runs_the_tuner(mocker):
    tuning = TrainTuning(phase_step=0.0, rabi_scale=0.9, achieved_sigma_z=1e-4)
    tuner = mocker.patch("ionstrobe.cli.strobe_cli.tune_pulse_train", return_value=tuning)
    spec = resolve_sequence_spec(load_run_config(_merged(SMALL, {"train": {"auto_tune": True}})))
    tuner.assert_called_once()
    assert spec.analysis.drive.rabi == pytest.approx(2 * math.pi * 0.3e6 * 0.9)


# ---------------------------------------------------------------------------
# build-tables and trace-phase-space
# ---------------------------------------------------------------------------

TABLE_CFG = _merged(SMALL, {"decode": {"alpha_max": 0.5, "alpha_step": 0.25}})


def test_decode_tables_are_cached(tmp_path, mocker):
    builder = mocker.spy(strobe_cli, "build_decode_tables")
    cfg = load_run_config(TABLE_CFG)
    first = cmd_build_tables(cfg, tables_dir=tmp_path / "tables")
    second = cmd_build_tables(cfg, tables_dir=tmp_path / "tables")
    assert builder.call_count == 1
    assert len(list((tmp_path / "tables").glob("*.tsv"))) == 1
    assert np.allclose(first.rows, second.rows, rtol=1e-10, equal_nan=True)
    assert first.summary_value("tables_key") == second.summary_value("tables_key")


def test_tables_key_tracks_physics(tmp_path):
    cfg = load_run_config(TABLE_CFG)
    other = load_run_config(_merged(TABLE_CFG, {"drive": {"eta": 0.3}}))
    key = strobe_cli.tables_key(cfg, resolve_sequence_spec(cfg))
    assert key == strobe_cli.tables_key(cfg, resolve_sequence_spec(cfg))
    assert key != strobe_cli.tables_key(other, resolve_sequence_spec(other))


def test_build_tables_command_rows(run):
    code, out = run("build-tables", TABLE_CFG)
    assert code == EXIT_OK
    table = load_output_table(out)
    branch = table.column("branch")
    assert np.sum(branch == 1) >= 3
    assert np.sum(branch == 0) >= 5


def test_trace_phase_space_decodes_displacement(run):
    cfg = {
        "hilbert": {"fock_dim": 64},
        "mode": {"n_th": 0.0},
        "state": {"alpha_abs": 1.0},
        "scan": {"phi_num": 12, "outer_var": "theta0", "outer_values": [0.0, 1.5707963267948966, 3.141592653589793]},
        "decode": {"alpha_max": 1.5, "alpha_step": 0.25},
    }
    code, out = run("trace-phase-space", cfg)
    assert code == EXIT_OK
    table = load_output_table(out)
    assert len(table.rows) == 6
    measured = table.rows[table.column("reference") == 0]
    x_nm = measured[:, table.column_names.index("X_nm")]
    p_zn = measured[:, table.column_names.index("P_zNus")]
    assert x_nm[0] == pytest.approx(X_UNIT_NM, rel=0.01)
    assert abs(x_nm[1]) < 0.1 * X_UNIT_NM
    assert p_zn[1] == pytest.approx(P_UNIT_ZNUS, rel=0.1)
    assert x_nm[2] == pytest.approx(-X_UNIT_NM, rel=0.01)


def test_trace_phase_space_requires_theta_scan(run):
    code, _ = run("trace-phase-space", SMALL)
    assert code == EXIT_CONFIG


def test_outward_order_starts_at_quarter_turn():
    assert _outward_order(np.array([0.0, math.pi / 2, math.pi])) == [1, 2, 0]
    assert _outward_order(np.array([0.0, 0.5, 1.0])) == [2, 1, 0]


# ---------------------------------------------------------------------------
# stability
# ---------------------------------------------------------------------------

STABILITY_ROWS = {"quiet": {"white_sigma": 0.01}, "loud": {"white_sigma": 0.1, "rw_sigma": 0.01}}


def test_stability_rows_and_traces(run):
    cfg = {"stability": {
        "duration_s": 400.0,
        "windows_s": [2.0, 40.0],
        "write_traces": True,
        "rows": STABILITY_ROWS,
    }}
    code, out = run("stability", cfg, "stab.tsv")
    assert code == EXIT_OK
    table = load_output_table(out)
    assert len(table.rows) == 4
    assert table.summary_value("row[0]") == "loud"
    assert table.summary_value("row[1]") == "quiet"
    loud = table.rows[table.column("row") == 0]
    quiet = table.rows[table.column("row") == 1]
    assert np.all(loud[:, 3] > quiet[:, 3])
    assert len(load_output_table(out.with_name("stab.tsv.quiet.trace")).rows) == 4001
    assert out.with_name("stab.tsv.loud.trace").exists()


def test_stability_row_order_does_not_change_the_table(run):
    st = {"duration_s": 200.0, "windows_s": [2.0, 20.0]}
    code, listed = run("stability", {"stability": {**st, "rows": STABILITY_ROWS}}, "listed.tsv")
    assert code == EXIT_OK
    flipped = dict(reversed(list(STABILITY_ROWS.items())))
    _, reordered = run("stability", {"stability": {**st, "rows": flipped}}, "reordered.tsv")
    assert reordered.read_text(encoding="utf-8") == listed.read_text(encoding="utf-8")


def test_stability_rerun_from_table_is_identical(run, tmp_path, tool_config):
    cfg = {"stability": {"duration_s": 200.0, "windows_s": [2.0, 20.0], "rows": STABILITY_ROWS},
           "detection": {"base_seed": 4}}
    _, first = run("stability", cfg, "first.tsv")
    again = tmp_path / "again.tsv"
    code = main(["stability", "--from-table", str(first), "--out", str(again),
                 "--tool-config", str(tool_config)])
    assert code == EXIT_OK
    assert again.read_text(encoding="utf-8") == first.read_text(encoding="utf-8")


# ---------------------------------------------------------------------------
# list-scenarios
# ---------------------------------------------------------------------------

def test_list_scenarios(tool_config, capsys):
    assert main(["list-scenarios", "--tool-config", str(tool_config)]) == EXIT_OK
    printed = capsys.readouterr().out.split()
    assert "ramsey-fringe" in printed
    assert "phase-stability" in printed
