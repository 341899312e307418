"""
RunConfig — schema, strict merging and object builders.
=======================================================

A RunConfig is a YAML document merged over DEFAULTS. Every key a user file
may contain is present in DEFAULTS; anything else is a ConfigError naming the
dotted key path. Units live in the key names (…_hz, …_ns, …_rad, …_nm).

Provides:
  - DEFAULTS / default_config   — the full default document
  - merge_config                — strict merge of a user mapping over the defaults
  - load_run_config             — YAML file or mapping → validated effective config
  - config_hash                 — sha256 of the canonical YAML dump
  - build_*                     — domain objects from a validated config

Builders convert domain-level ValueErrors into ConfigErrors keyed by the
section they came from, so the CLI can report the offending section.
"""

from __future__ import annotations

import copy
import hashlib
import logging
import math
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
import yaml

from ionstrobe.calibration.calib_fit import (
    TUNE_METHODS,
    TrainTuning,
    apply_tuning,
    derive_lamb_dicke,
    ideal_rabi_scale,
)
from ionstrobe.dynamics.dynamics import ENVELOPES, DephasingSpec, PulseTrainSpec
from ionstrobe.hilbert.hilbert_core import (
    CoherentAmp,
    DriveParams,
    FrameParams,
    HilbertSpec,
    ModeParams,
    SqueezeParam,
    UnitScale,
)
from ionstrobe.sequence.sequence_engine import MW_MODES, OUTER_VARS, PatternField, ScanSpec, SequenceSpec
from ionstrobe.shared.errors import ConfigError
from ionstrobe.stability.stability_sim import PhaseNoiseModel

log = logging.getLogger(__name__)

TWO_PI = 2 * math.pi

# ---------------------------------------------------------------------------
# Defaults
# ---------------------------------------------------------------------------

DEFAULTS: dict = {
    "hilbert": {"fock_dim": 128, "tail_tol": 1e-4},
    "mode": {"freq_hz": 1.3e6, "n_th": 0.15, "n_th_samples": 0, "mode_angle_deg": 0.0},
    "units": {"mass_amu": 25.0, "hbar": 1.054571817e-34},
    "drive": {
        "rabi_hz": 0.3e6,
        "eta": 0.40,
        "detuning_hz": 0.0,
        "derive_from_geometry": {"enabled": False, "wavelength_nm": 140.0, "rotation_rad": 0.840},
    },
    "train": {
        "n_flashes": 30,
        "flash_ns": 100.0,
        "cycle_ns": None,
        "cycles_per_flash": 1,
        "dphi_rad": 0.0,
        "rabi_scale": None,
        "auto_tune": False,
        "tune_tol": 1e-3,
        "tune_method": "coordinate",
        "tuning_file": None,
    },
    "state": {"alpha_abs": 0.0, "alpha_phase_rad": 0.0, "zeta_abs": 0.0, "zeta_phase_rad": 0.0},
    "sync": {"phase_rad": math.pi, "mw_mode": "ideal", "mw_rabi_hz": 0.1e6},
    "dephasing": {"tau_us": 70.0, "envelope": "gaussian"},
    "scan": {
        "phi_start": 0.0,
        "phi_stop": TWO_PI,
        "phi_num": 21,
        "outer_var": "none",
        "outer_values": [],
        "interleave_reference": False,
        "reference_phi_rad": math.pi / 2,
        "inject_drift": False,
    },
    "detection": {"mode": "analytic", "shots": 250, "base_seed": 0},
    "pattern": {
        "wavelength_nm": 138.0,
        "rotation_rad": 0.840,
        "phase_origin_rad": 0.0,
        "contrast": 0.76,
        "extent_nm": 400.0,
        "grid_num": 26,
        "bootstrap": 0,
    },
    "decode": {"alpha_max": 5.0, "alpha_step": 0.25, "phi_num": 6},
    "noise_floor": {"repeats": 100},
    "stability": {
        "white_sigma": 0.0,
        "rw_sigma": 0.0,
        "drift_rate": 0.0,
        "sample_interval_s": 0.1,
        "duration_s": 4000.0,
        "windows_s": [2.0, 40.0, 200.0],
        "reference_interval_s": 10.0,
        "write_traces": False,
        "rows": {},
    },
}

# keys whose default is null, with the type a non-null value must have
NULLABLE = {
    "train.cycle_ns": float,
    "train.rabi_scale": float,
    "train.tuning_file": str,
}

# free-form mappings: user-chosen names, each value validated against a row schema
ROW_SCHEMAS = {
    "stability.rows": {"white_sigma": 0.0, "rw_sigma": 0.0, "drift_rate": 0.0},
}


def default_config() -> dict:
    return copy.deepcopy(DEFAULTS)


# ---------------------------------------------------------------------------
# Merging and type checks
# ---------------------------------------------------------------------------

def _as_float(value: Any, key: str) -> float:
    if isinstance(value, bool):
        raise ConfigError(f"expected a number, got {value!r}", key=key)
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        # YAML 1.1 reads '1.3e6' (no dot/sign in the exponent) as a string
        try:
            return float(value)
        except ValueError:
            pass
    raise ConfigError(f"expected a number, got {value!r}", key=key)


def _check_value(value: Any, default: Any, key: str) -> Any:
    if default is None:
        if value is None:
            return None
        kind = NULLABLE[key]
        if kind is float:
            return _as_float(value, key)
        if not isinstance(value, str):
            raise ConfigError(f"expected a string or null, got {value!r}", key=key)
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"expected true/false, got {value!r}", key=key)
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {value!r}", key=key)
        return value
    if isinstance(default, float):
        return _as_float(value, key)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"expected a string, got {value!r}", key=key)
        return value
    if isinstance(default, list):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"expected a list, got {value!r}", key=key)
        return [_as_float(v, f"{key}[{i}]") for i, v in enumerate(value)]
    raise ConfigError(f"unsupported value {value!r}", key=key)


def _merge_rows(override: Any, schema: dict, key: str) -> dict:
    if not isinstance(override, dict):
        raise ConfigError("expected a mapping of named rows", key=key)
    rows = {}
    for name, row in override.items():
        rows[str(name)] = merge_config(schema, row or {}, prefix=f"{key}.{name}.")
    return rows


def merge_config(defaults: dict, override: Optional[dict], prefix: str = "") -> dict:
    """Strict recursive merge; unknown keys and wrong types raise ConfigError."""
    merged = copy.deepcopy(defaults)
    if override is None:
        return merged
    if not isinstance(override, dict):
        raise ConfigError("expected a mapping", key=prefix.rstrip(".") or None)
    for key, value in override.items():
        path = f"{prefix}{key}"
        if key not in defaults:
            raise ConfigError("unknown key", key=path)
        default = defaults[key]
        if path in ROW_SCHEMAS:
            merged[key] = _merge_rows(value, ROW_SCHEMAS[path], path)
        elif isinstance(default, dict):
            merged[key] = merge_config(default, value, prefix=path + ".")
        else:
            merged[key] = _check_value(value, default, path)
    return merged


def _require(condition: bool, message: str, key: str) -> None:
    if not condition:
        raise ConfigError(message, key=key)


def validate_run_config(cfg: dict) -> dict:
    """Cross-field checks the type schema cannot express."""
    _require(cfg["drive"]["rabi_hz"] >= 0, "must be ≥ 0", "drive.rabi_hz")
    _require(cfg["train"]["n_flashes"] >= 1, "must be ≥ 1", "train.n_flashes")
    _require(cfg["train"]["cycles_per_flash"] >= 1, "must be ≥ 1", "train.cycles_per_flash")
    _require(cfg["train"]["tune_method"] in TUNE_METHODS,
             f"must be one of {TUNE_METHODS}", "train.tune_method")
    _require(cfg["sync"]["mw_mode"] in MW_MODES, f"must be one of {MW_MODES}", "sync.mw_mode")
    _require(cfg["dephasing"]["envelope"] in ENVELOPES,
             f"must be one of {ENVELOPES}", "dephasing.envelope")
    _require(cfg["detection"]["mode"] in ("analytic", "shots"),
             "must be 'analytic' or 'shots'", "detection.mode")
    _require(cfg["detection"]["shots"] >= 1, "must be ≥ 1", "detection.shots")

    state = cfg["state"]
    _require(not (state["alpha_abs"] > 0 and state["zeta_abs"] > 0),
             "alpha_abs and zeta_abs cannot both be non-zero", "state")

    scan = cfg["scan"]
    _require(scan["phi_num"] >= 1, "must be ≥ 1", "scan.phi_num")
    _require(scan["outer_var"] in OUTER_VARS, f"must be one of {OUTER_VARS}", "scan.outer_var")
    _require(scan["outer_var"] == "none" or len(scan["outer_values"]) > 0,
             f"outer_var '{scan['outer_var']}' needs outer_values", "scan.outer_values")

    decode = cfg["decode"]
    _require(decode["alpha_step"] > 0, "must be positive", "decode.alpha_step")
    _require(decode["alpha_max"] >= 2 * decode["alpha_step"],
             "must cover at least two amplitude steps", "decode.alpha_max")
    _require(cfg["pattern"]["grid_num"] >= 2, "must be ≥ 2", "pattern.grid_num")
    return cfg


def load_run_config(source: Union[None, str, Path, dict] = None) -> dict:
    """Effective config from a YAML path, a mapping, or the defaults alone."""
    if source is None:
        user = {}
    elif isinstance(source, dict):
        user = source
    else:
        path = Path(source)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}", key="config")
        try:
            user = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"YAML parse error in {path}: {exc}", key="config") from exc
    return validate_run_config(merge_config(DEFAULTS, user))


def dump_config(cfg: dict) -> str:
    return yaml.safe_dump(cfg, sort_keys=True, default_flow_style=False, allow_unicode=True)


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(dump_config(cfg).encode("utf-8")).hexdigest()


def with_seed(cfg: dict, seed: Optional[int]) -> dict:
    """Copy of cfg with detection.base_seed overridden (None leaves it as is)."""
    out = copy.deepcopy(cfg)
    if seed is not None:
        out["detection"]["base_seed"] = int(seed)
    return out


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------

@contextmanager
def config_section(key: str):
    try:
        yield
    except ValueError as exc:
        raise ConfigError(str(exc), key=key) from exc


def build_hilbert(cfg: dict) -> HilbertSpec:
    with config_section("hilbert"):
        return HilbertSpec(fock_dim=cfg["hilbert"]["fock_dim"], tail_tol=cfg["hilbert"]["tail_tol"])


def build_mode(cfg: dict) -> ModeParams:
    m = cfg["mode"]
    with config_section("mode"):
        return ModeParams(freq=TWO_PI * m["freq_hz"], n_th=m["n_th"],
                          mode_angle=math.radians(m["mode_angle_deg"]))


def build_units(cfg: dict) -> UnitScale:
    with config_section("units"):
        return UnitScale.from_mode(build_mode(cfg), cfg["units"]["mass_amu"], cfg["units"]["hbar"])


def build_eta(cfg: dict) -> float:
    geo = cfg["drive"]["derive_from_geometry"]
    if not geo["enabled"]:
        return cfg["drive"]["eta"]
    mode, units = build_mode(cfg), build_units(cfg)
    with config_section("drive.derive_from_geometry"):
        eta = derive_lamb_dicke(units.mass, mode.freq, geo["wavelength_nm"] * 1e-9,
                                geo["rotation_rad"] - mode.mode_angle, hbar=units.hbar)
    log.debug(f"η derived from geometry: {eta:.4f}")
    return eta


def build_drive(cfg: dict) -> DriveParams:
    with config_section("drive"):
        return DriveParams(rabi=TWO_PI * cfg["drive"]["rabi_hz"], phase=0.0, eta=build_eta(cfg))


def build_frame(cfg: dict) -> FrameParams:
    return FrameParams(detuning=TWO_PI * cfg["drive"]["detuning_hz"])


def build_train(cfg: dict) -> PulseTrainSpec:
    """Analysis train at the configured Rabi rate, before any scaling or tuning."""
    t = cfg["train"]
    mode = build_mode(cfg)
    cycle = t["cycle_ns"] * 1e-9 if t["cycle_ns"] is not None else t["cycles_per_flash"] * mode.period
    with config_section("train"):
        return PulseTrainSpec(
            n_flashes=t["n_flashes"],
            flash_dur=t["flash_ns"] * 1e-9,
            cycle_dur=cycle,
            drive=build_drive(cfg),
            phase_step=t["dphi_rad"],
        )


def build_excitation(cfg: dict):
    s = cfg["state"]
    with config_section("state"):
        if s["alpha_abs"] > 0:
            return CoherentAmp(s["alpha_abs"], s["alpha_phase_rad"])
        if s["zeta_abs"] > 0:
            return SqueezeParam(s["zeta_abs"], s["zeta_phase_rad"])
    return None


def build_dephasing(cfg: dict) -> DephasingSpec:
    with config_section("dephasing"):
        return DephasingSpec(tau=cfg["dephasing"]["tau_us"] * 1e-6, envelope=cfg["dephasing"]["envelope"])


def build_sequence_spec(
    cfg: dict,
    tuning: Optional[TrainTuning] = None,
    scaled: bool = True,
) -> SequenceSpec:
    """
    SequenceSpec for the config.

    tuning:  a TrainTuning (from calibrate-train or a tuning file) applied on
             top of the raw train; takes precedence over train.rabi_scale.
    scaled:  False returns the raw train, the starting point of tune_pulse_train.
             Otherwise the Rabi rate is multiplied by train.rabi_scale, or by
             the carrier estimate ideal_rabi_scale when that is null.
    """
    with config_section("sync"):
        spec = SequenceSpec(
            hilbert=build_hilbert(cfg),
            mode=build_mode(cfg),
            analysis=build_train(cfg),
            frame=build_frame(cfg),
            excitation=build_excitation(cfg),
            sync_phase=cfg["sync"]["phase_rad"],
            dephasing=build_dephasing(cfg),
            n_th_samples=cfg["mode"]["n_th_samples"],
            sample_seed=cfg["detection"]["base_seed"],
            mw_mode=cfg["sync"]["mw_mode"],
            mw_rabi=TWO_PI * cfg["sync"]["mw_rabi_hz"],
        )
    if tuning is not None:
        with config_section("train"):
            return apply_tuning(spec, tuning)
    if not scaled or spec.analysis.drive.rabi == 0:
        return spec
    scale = cfg["train"]["rabi_scale"]
    if scale is None:
        scale = ideal_rabi_scale(spec.analysis)
    with config_section("train"):
        return apply_tuning(spec, TrainTuning(phase_step=cfg["train"]["dphi_rad"], rabi_scale=scale,
                                              achieved_sigma_z=float("nan"), method="fixed"))


def build_phi_grid(cfg: dict) -> np.ndarray:
    s = cfg["scan"]
    return np.linspace(s["phi_start"], s["phi_stop"], s["phi_num"])


def build_scan(cfg: dict) -> ScanSpec:
    s, d = cfg["scan"], cfg["detection"]
    outer = s["outer_values"] if s["outer_var"] != "none" else [0.0]
    with config_section("scan"):
        return ScanSpec(
            phi_grid=build_phi_grid(cfg),
            outer_grid=outer,
            outer_var=s["outer_var"],
            shots=d["shots"],
            base_seed=d["base_seed"],
            detection=d["mode"],
            interleave_reference=s["interleave_reference"],
            reference_phi=s["reference_phi_rad"],
        )


def build_pattern_field(cfg: dict) -> PatternField:
    p = cfg["pattern"]
    with config_section("pattern"):
        return PatternField(
            wavelength=p["wavelength_nm"] * 1e-9,
            rotation=p["rotation_rad"],
            phase_origin=p["phase_origin_rad"],
            amplitude=p["contrast"],
        )


def build_noise_models(cfg: dict) -> dict[str, PhaseNoiseModel]:
    """
    Named noise models: stability.rows if given, else one 'trace' model from the top-level keys.

    Rows come back sorted by name, matching the key order of the echoed config.
    """
    st = cfg["stability"]
    rows = st["rows"] or {
        "trace": {"white_sigma": st["white_sigma"], "rw_sigma": st["rw_sigma"], "drift_rate": st["drift_rate"]}
    }
    models = {}
    for name, row in sorted(rows.items()):
        with config_section(f"stability.rows.{name}" if st["rows"] else "stability"):
            models[name] = PhaseNoiseModel(sample_interval=st["sample_interval_s"], **row)
    return models


def build_alpha_grid(cfg: dict) -> np.ndarray:
    d = cfg["decode"]
    return np.arange(d["alpha_step"], d["alpha_max"] + 1e-9, d["alpha_step"])
