"""Tests: RunConfig merging, validation, hashing and the object builders."""
import math

import pytest
import yaml

from ionstrobe.cli.run_config import (
    DEFAULTS,
    build_eta,
    build_excitation,
    build_noise_models,
    build_scan,
    build_sequence_spec,
    config_hash,
    default_config,
    dump_config,
    load_run_config,
    merge_config,
    with_seed,
)
from ionstrobe.hilbert.hilbert_core import CoherentAmp, SqueezeParam
from ionstrobe.shared.errors import ConfigError


def _key_of(override) -> str:
    with pytest.raises(ConfigError) as excinfo:
        load_run_config(override)
    return excinfo.value.key


# ---------------------------------------------------------------------------
# Defaults and merging
# ---------------------------------------------------------------------------

def test_defaults_validate():
    cfg = load_run_config()
    assert cfg == load_run_config({})
    assert cfg["hilbert"]["fock_dim"] == 128
    assert cfg["train"]["cycle_ns"] is None


def test_default_config_is_a_copy():
    cfg = default_config()
    cfg["hilbert"]["fock_dim"] = 3
    assert DEFAULTS["hilbert"]["fock_dim"] == 128


def test_override_keeps_untouched_siblings():
    cfg = load_run_config({"mode": {"n_th": 0.5}})
    assert cfg["mode"]["n_th"] == 0.5
    assert cfg["mode"]["freq_hz"] == 1.3e6


def test_unknown_key_names_dotted_path():
    assert _key_of({"scan": {"phi_nmu": 3}}) == "scan.phi_nmu"
    assert _key_of({"lasers": {}}) == "lasers"


def test_wrong_type_names_the_key():
    assert _key_of({"hilbert": {"fock_dim": "big"}}) == "hilbert.fock_dim"
    assert _key_of({"hilbert": {"fock_dim": 12.5}}) == "hilbert.fock_dim"
    assert _key_of({"scan": {"interleave_reference": "yes"}}) == "scan.interleave_reference"
    assert _key_of({"scan": {"outer_values": [0.0, "x"]}}) == "scan.outer_values[1]"


def test_section_must_be_a_mapping():
    assert _key_of({"mode": 3}) == "mode"


def test_exponent_strings_are_numbers():
    cfg = load_run_config(yaml.safe_load("mode:\n  freq_hz: 1.3e6\n"))
    assert cfg["mode"]["freq_hz"] == 1.3e6


def test_integers_accepted_for_floats():
    assert load_run_config({"mode": {"n_th": 0}})["mode"]["n_th"] == 0.0


def test_nullable_keys():
    cfg = load_run_config({"train": {"cycle_ns": 800, "tuning_file": "t.json"}})
    assert cfg["train"]["cycle_ns"] == 800.0
    assert _key_of({"train": {"tuning_file": 3}}) == "train.tuning_file"


def test_named_stability_rows():
    cfg = load_run_config({"stability": {"rows": {"quiet": {"white_sigma": 0.1}}}})
    assert cfg["stability"]["rows"]["quiet"] == {"white_sigma": 0.1, "rw_sigma": 0.0, "drift_rate": 0.0}
    assert _key_of({"stability": {"rows": {"x": {"foo": 1.0}}}}) == "stability.rows.x.foo"
    assert _key_of({"stability": {"rows": [1, 2]}}) == "stability.rows"


def test_merge_config_with_prefix():
    with pytest.raises(ConfigError) as excinfo:
        merge_config({"a": 1}, {"b": 2}, prefix="outer.")
    assert excinfo.value.key == "outer.b"


# ---------------------------------------------------------------------------
# Cross-field validation
# ---------------------------------------------------------------------------

def test_coherent_and_squeezed_together_rejected():
    assert _key_of({"state": {"alpha_abs": 1.0, "zeta_abs": 0.5}}) == "state"


def test_outer_var_needs_values():
    assert _key_of({"scan": {"outer_var": "theta0"}}) == "scan.outer_values"


def test_enumerations_checked():
    assert _key_of({"scan": {"outer_var": "detuning"}}) == "scan.outer_var"
    assert _key_of({"sync": {"mw_mode": "adiabatic"}}) == "sync.mw_mode"
    assert _key_of({"dephasing": {"envelope": "lorentzian"}}) == "dephasing.envelope"
    assert _key_of({"detection": {"mode": "camera"}}) == "detection.mode"
    assert _key_of({"train": {"tune_method": "annealing"}}) == "train.tune_method"


def test_decode_grid_needs_two_steps():
    assert _key_of({"decode": {"alpha_max": 0.3}}) == "decode.alpha_max"


# ---------------------------------------------------------------------------
# Files, hashing and seeds
# ---------------------------------------------------------------------------

def test_load_from_yaml_file(tmp_path):
    path = tmp_path / "run.yml"
    path.write_text("state:\n  alpha_abs: 2.0\nscan:\n  phi_num: 9\n", encoding="utf-8")
    cfg = load_run_config(path)
    assert cfg["state"]["alpha_abs"] == 2.0
    assert cfg["scan"]["phi_num"] == 9


def test_missing_file_is_config_error(tmp_path):
    assert _key_of(tmp_path / "absent.yml") == "config"


def test_broken_yaml_is_config_error(tmp_path):
    path = tmp_path / "broken.yml"
    path.write_text("scan: [unclosed\n", encoding="utf-8")
    assert _key_of(path) == "config"


def test_dumped_config_reloads_identically():
    cfg = load_run_config({"state": {"alpha_abs": 3.0}, "scan": {"outer_var": "theta0", "outer_values": [0, 1]}})
    assert load_run_config(yaml.safe_load(dump_config(cfg))) == cfg


def test_hash_is_stable_and_seed_sensitive():
    cfg = load_run_config()
    assert config_hash(cfg) == config_hash(load_run_config())
    assert len(config_hash(cfg)) == 64
    assert config_hash(with_seed(cfg, 5)) != config_hash(cfg)


def test_with_seed_copies():
    cfg = load_run_config()
    seeded = with_seed(cfg, 7)
    assert seeded["detection"]["base_seed"] == 7
    assert cfg["detection"]["base_seed"] == 0
    assert with_seed(cfg, None) == cfg


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------

def test_default_sequence_spec_is_scaled_to_quarter_turn():
    spec = build_sequence_spec(load_run_config())
    train = spec.analysis
    angle = train.n_flashes * train.drive.rabi * train.flash_dur * math.exp(-train.drive.eta**2 / 2)
    assert angle == pytest.approx(math.pi / 2)
    assert train.duration * 1e6 == pytest.approx(23.077, abs=1e-3)


def test_unscaled_sequence_spec_keeps_configured_rabi():
    spec = build_sequence_spec(load_run_config(), scaled=False)
    assert spec.analysis.drive.rabi == pytest.approx(2 * math.pi * 0.3e6)


def test_fixed_rabi_scale():
    spec = build_sequence_spec(load_run_config({"train": {"rabi_scale": 0.5}}))
    assert spec.analysis.drive.rabi == pytest.approx(math.pi * 0.3e6)


def test_explicit_cycle_overrides_mode_period():
    spec = build_sequence_spec(load_run_config({"train": {"cycle_ns": 900.0}}), scaled=False)
    assert spec.analysis.cycle_dur == pytest.approx(900e-9)


def test_flash_longer_than_cycle_is_config_error():
    cfg = load_run_config({"train": {"flash_ns": 1000.0, "cycle_ns": 500.0}})
    with pytest.raises(ConfigError) as excinfo:
        build_sequence_spec(cfg)
    assert excinfo.value.key == "train"


def test_negative_occupation_is_config_error():
    cfg = load_run_config({"mode": {"n_th": -0.1}})
    with pytest.raises(ConfigError) as excinfo:
        build_sequence_spec(cfg)
    assert excinfo.value.key == "mode"


def test_eta_derived_from_geometry():
    cfg = load_run_config({"drive": {"derive_from_geometry": {"enabled": True}}})
    assert 0.35 <= build_eta(cfg) <= 0.42
    assert build_eta(load_run_config()) == 0.40


def test_excitation_builder():
    assert build_excitation(load_run_config()) is None
    assert build_excitation(load_run_config({"state": {"alpha_abs": 2.0, "alpha_phase_rad": 0.5}})) == CoherentAmp(2.0, 0.5)
    assert build_excitation(load_run_config({"state": {"zeta_abs": 1.0}})) == SqueezeParam(1.0, 0.0)


def test_scan_builder():
    cfg = load_run_config({
        "scan": {"phi_num": 5, "outer_var": "theta0", "outer_values": [0.0, 1.0, 2.0]},
        "detection": {"mode": "shots", "shots": 100, "base_seed": 9},
    })
    scan = build_scan(cfg)
    assert scan.n_points == 15
    assert scan.shots == 100
    assert scan.base_seed == 9
    assert scan.phi_grid[-1] == pytest.approx(2 * math.pi)


def test_scan_without_outer_has_single_point():
    scan = build_scan(load_run_config({"scan": {"outer_values": [1.0, 2.0]}}))
    assert list(scan.outer_grid) == [0.0]


def test_single_noise_model_from_top_level_keys():
    models = build_noise_models(load_run_config({"stability": {"white_sigma": 0.2}}))
    assert list(models) == ["trace"]
    assert models["trace"].white_sigma == 0.2
