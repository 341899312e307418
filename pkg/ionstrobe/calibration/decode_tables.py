"""
Decode tables — numerical calibration from fringe fits to ⟨X⟩ and |⟨P⟩|.
========================================================================

Pipeline:  simulate φ-scans over |α| at ϑ0 ∈ {0, π, π/2} → fit → tabulate → invert

  position branch   ϑ0 ∈ {0, π}:  X = ±2·x_zpf·|α|  ↔  φ0 relative to the α = 0 fringe
                                   (unwrapped along |α|), plus the fitted contrast
                                   along that branch
  momentum branch   ϑ0 = π/2:     |P| = 2·p_zpf·|α|  ↔  C, anchored at the α = 0 contrast

Decoding reads X from φ0 first, divides out the contrast that this position
excursion alone costs (C·C0/C_pos(X)), then reads |P| from the corrected contrast.

With the drive term e^{iφ}Cσ₊ the fringe phase moves opposite to the
position (φ0 ≈ −η⟨a + a†⟩); the tables carry whichever sign the
simulation produces.

File format (versioned, plain text):

    # ionstrobe-decode-tables v1
    # phase_ref_rad: ...
    # contrast_ref: ...
    # build_config: {...json...}
    # columns: branch[0=position,1=momentum] X_m[m] P_kgms[kg*m/s] phi0_rad[rad] contrast[1]
    rows...
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

from ionstrobe.calibration.calib_fit import CosineFit, fit_cosine, fit_records
from ionstrobe.hilbert.hilbert_core import CoherentAmp, UnitScale
from ionstrobe.sequence.sequence_engine import ScanSpec, SequenceSpec, run_scan, run_sequence
from ionstrobe.shared.errors import DecodeError
from ionstrobe.shared.utils import save_text, wrap_phase

log = logging.getLogger(__name__)

TABLE_FORMAT = "ionstrobe-decode-tables v1"
DOMAIN_MARGIN = 0.10
MAX_SKIPPED_FRACTION = 0.10
DEFAULT_PHI_NUM = 6


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DecodeTables:
    pos_x: np.ndarray               # m, ascending
    pos_phi0: np.ndarray            # rad, relative to the α = 0 fringe
    pos_contrast: np.ndarray
    mom_p: np.ndarray               # kg·m/s, ascending from 0
    mom_contrast: np.ndarray        # strictly decreasing
    phase_ref: float                # absolute φ0 of the α = 0 fringe
    contrast_ref: float             # C at α = 0
    build_config: dict = field(default_factory=dict)

    @property
    def pos_map(self) -> tuple[np.ndarray, np.ndarray]:
        return self.pos_phi0, self.pos_x

    @property
    def mom_map(self) -> tuple[np.ndarray, np.ndarray]:
        return self.mom_contrast, self.mom_p

    @cached_property
    def _x_of_phi(self) -> PchipInterpolator:
        order = np.argsort(self.pos_phi0)
        return PchipInterpolator(self.pos_phi0[order], self.pos_x[order])

    @cached_property
    def _contrast_of_x(self) -> PchipInterpolator:
        return PchipInterpolator(self.pos_x, self.pos_contrast)

    @cached_property
    def _p_of_contrast(self) -> PchipInterpolator:
        order = np.argsort(self.mom_contrast)
        return PchipInterpolator(self.mom_contrast[order], self.mom_p[order])


class DecodedObservables(NamedTuple):
    x: float                        # m
    p_mag: float                    # kg·m/s
    clamped: bool


class NoiseFloor(NamedTuple):
    sigma_x: float                  # m
    sigma_p: float                  # kg·m/s
    mean_x: float
    mean_p: float
    repeats: int                    # repeats that decoded
    skipped: int = 0


# ---------------------------------------------------------------------------
# Building
# ---------------------------------------------------------------------------

def default_phi_grid(num: int = DEFAULT_PHI_NUM) -> np.ndarray:
    return np.linspace(0.0, 2 * math.pi, num, endpoint=False)


def _require_monotone(values: np.ndarray, keys: np.ndarray, what: str, unit: str) -> None:
    steps = np.diff(values)
    sign = np.sign(steps[0]) if steps.size else 1.0
    bad = np.flatnonzero(np.sign(steps) != sign) if sign != 0 else np.array([0])
    if bad.size:
        i = int(bad[0])
        raise DecodeError(
            f"{what} is not strictly monotone on [{keys[i]:.6g}, {keys[i + 1]:.6g}] {unit}"
        )


def _branch_fits(spec, alpha_grid, theta0, phi_grid, threads) -> list[CosineFit]:
    scan = ScanSpec(phi_grid=phi_grid, outer_grid=alpha_grid, outer_var="alpha_abs")
    records = run_scan(scan, replace(spec, excitation=CoherentAmp(0.0, theta0)), threads=threads)
    n_phi = len(phi_grid)
    return [fit_records(records[i * n_phi:(i + 1) * n_phi]) for i in range(len(alpha_grid))]


def build_decode_tables(
    config: SequenceSpec,
    alpha_grid: Sequence[float],
    units: UnitScale,
    theta_grid: Sequence[float] = (0.0, math.pi / 2, math.pi),
    phi_grid: Optional[Sequence[float]] = None,
    threads: int = 1,
) -> DecodeTables:
    """Simulate analytic φ-scans over |α| and tabulate both decode branches.

    `config` must already carry the tuned analysis train.
    """
    thetas = set(round(t, 12) for t in theta_grid)
    if not {0.0, round(math.pi / 2, 12), round(math.pi, 12)} <= thetas:
        raise ValueError("theta_grid must contain 0, π/2 and π")
    alphas = np.unique(np.concatenate([[0.0], np.asarray(alpha_grid, dtype=float)]))
    if alphas[0] < 0:
        raise ValueError("alpha_grid entries must be ≥ 0")
    if len(alphas) < 3:
        raise ValueError("alpha_grid needs at least two non-zero amplitudes")
    phi_grid = default_phi_grid() if phi_grid is None else np.asarray(phi_grid, dtype=float)

    log.info(f"building decode tables: {len(alphas)} amplitudes up to |α|={alphas[-1]:.3g}")
    fits = {t: _branch_fits(config, alphas, t, phi_grid, threads) for t in (0.0, math.pi, math.pi / 2)}

    ref = fits[0.0][0]
    phase_ref, contrast_ref = ref.phase, ref.contrast

    def relative_phases(branch):
        return np.unwrap([wrap_phase(f.phase - phase_ref) for f in branch])

    plus, minus = relative_phases(fits[0.0]), relative_phases(fits[math.pi])
    pos_x = np.concatenate([-alphas[:0:-1], alphas]) * 2 * units.x_zpf
    pos_phi0 = np.concatenate([minus[:0:-1], plus])
    pos_contrast = np.array(
        [f.contrast for f in fits[math.pi][:0:-1]] + [f.contrast for f in fits[0.0]]
    )
    mom_p = alphas * 2 * units.p_zpf
    mom_contrast = np.array([f.contrast for f in fits[math.pi / 2]])

    _require_monotone(pos_phi0, pos_x, "position map φ0(X)", "m")
    _require_monotone(mom_contrast, mom_p, "momentum map C(|P|)", "kg·m/s")

    build_config = {
        "fock_dim": config.hilbert.fock_dim,
        "freq_rad_s": config.mode.freq,
        "n_th": config.mode.n_th,
        "eta": config.analysis.drive.eta,
        "rabi_rad_s": config.analysis.drive.rabi,
        "n_flashes": config.analysis.n_flashes,
        "flash_s": config.analysis.flash_dur,
        "cycle_s": config.analysis.cycle_dur,
        "phase_step_rad": config.analysis.phase_step,
        "x_zpf_m": units.x_zpf,
        "p_zpf_kgms": units.p_zpf,
        "phi_grid_rad": [float(p) for p in phi_grid],
    }
    log.info(
        f"decode tables ready: φ0 span {np.ptp(pos_phi0):.3f} rad, "
        f"C from {contrast_ref:.4f} down to {mom_contrast[-1]:.4f}"
    )
    return DecodeTables(pos_x, pos_phi0, pos_contrast, mom_p, mom_contrast,
                        phase_ref, contrast_ref, build_config)


# ---------------------------------------------------------------------------
# Decoding
# ---------------------------------------------------------------------------

def referenced_fit(measurement: CosineFit, reference: CosineFit, tables: DecodeTables) -> CosineFit:
    """Re-express a measurement phase relative to its own α = 0 reference."""
    return replace(measurement, phase=tables.phase_ref + wrap_phase(measurement.phase - reference.phase))


def decode_observables(
    fit: CosineFit,
    tables: DecodeTables,
    x_hint: float = 0.0,
) -> DecodedObservables:
    """
    Invert φ0 → X and C → |P|.

    The 2π branch of φ0 is chosen so that the decoded X lies nearest
    x_hint. Values outside a table by up to 10 % of its range are clamped
    and flagged; further out is a DecodeError. Contrast above the α = 0
    anchor means |P| = 0 and is always clamped.
    """
    lo, hi = float(tables.pos_phi0.min()), float(tables.pos_phi0.max())
    margin = DOMAIN_MARGIN * (hi - lo)
    rel = wrap_phase(fit.phase - tables.phase_ref)
    candidates = [rel + 2 * math.pi * k for k in range(-3, 4)]
    candidates = [c for c in candidates if lo - margin <= c <= hi + margin]
    if not candidates:
        raise DecodeError(
            f"fit phase {fit.phase:.4f} rad lies outside the position table "
            f"[{lo:.4f}, {hi:.4f}] rad (relative) by more than {DOMAIN_MARGIN:.0%}"
        )
    decoded = [(float(tables._x_of_phi(min(max(c, lo), hi))), not lo <= c <= hi) for c in candidates]
    x, clamped = min(decoded, key=lambda item: abs(item[0] - x_hint))

    c_pos = float(tables._contrast_of_x(x))
    corrected = fit.contrast * tables.contrast_ref / c_pos
    c_lo, c_hi = float(tables.mom_contrast.min()), float(tables.mom_contrast.max())
    if corrected >= c_hi:
        return DecodedObservables(x, 0.0, clamped or corrected > c_hi)
    if corrected < c_lo:
        if corrected < c_lo - DOMAIN_MARGIN * (c_hi - c_lo):
            raise DecodeError(
                f"contrast {fit.contrast:.4f} (corrected {corrected:.4f}) lies below the "
                f"momentum table [{c_lo:.4f}, {c_hi:.4f}] by more than {DOMAIN_MARGIN:.0%}"
            )
        return DecodedObservables(x, float(tables.mom_p.max()), True)
    return DecodedObservables(x, float(tables._p_of_contrast(corrected)), clamped)


# ---------------------------------------------------------------------------
# Noise floor
# ---------------------------------------------------------------------------

def _noisy_fit(rng, p_true: np.ndarray, phi: np.ndarray, shots: int) -> CosineFit:
    mean = rng.binomial(shots, p_true) / shots
    sem = np.sqrt(mean * (1 - mean) / shots)
    return fit_cosine(np.column_stack([phi, mean, sem]), shots=shots)


def noise_floor_estimate(
    config: SequenceSpec,
    tables: DecodeTables,
    shots: Optional[int],
    n_repeats: int,
    seed: int = 0,
    phi_grid: Optional[Sequence[float]] = None,
) -> NoiseFloor:
    """
    Spread of decoded (X, |P|) at α = 0 under shot noise.

    Each repeat draws a measurement fringe and its interleaved α = 0
    reference, fits both and decodes the measurement relative to the
    reference. shots=None is the noiseless round trip.

    Repeats that decode outside the tables are skipped and counted; more
    than MAX_SKIPPED_FRACTION of them is a DecodeError (the tables are too
    narrow for this shot count).
    """
    if n_repeats < 20:
        raise ValueError(f"noise floor needs ≥ 20 repeats, got {n_repeats}")
    phi = default_phi_grid() if phi_grid is None else np.asarray(phi_grid, dtype=float)
    reference = config.without_excitation()
    p_true = np.array([run_sequence(reference, p).p_down for p in phi])

    if shots is None:
        x, p_mag, _ = decode_observables(fit_cosine(np.column_stack([phi, p_true])), tables)
        return NoiseFloor(0.0, 0.0, x, p_mag, n_repeats)

    rng = np.random.default_rng(seed)
    xs, ps = [], []
    skipped = 0
    for _ in range(n_repeats):
        measured = _noisy_fit(rng, p_true, phi, shots)
        ref = _noisy_fit(rng, p_true, phi, shots)
        try:
            x, p_mag, _ = decode_observables(referenced_fit(measured, ref, tables), tables)
        except DecodeError as exc:
            skipped += 1
            log.debug(f"noise floor repeat skipped: {exc}")
            continue
        xs.append(x)
        ps.append(p_mag)

    if skipped > MAX_SKIPPED_FRACTION * n_repeats:
        raise DecodeError(
            f"{skipped}/{n_repeats} noise-floor repeats at {shots} shots decode outside the tables "
            f"(|P| ≤ {tables.mom_p.max() * 1e27:.3g} zN·µs); build them to a larger |α| (decode.alpha_max)"
        )
    if skipped:
        log.warning(f"noise floor: skipped {skipped}/{n_repeats} repeats outside the tables")
    floor = NoiseFloor(float(np.std(xs, ddof=1)), float(np.std(ps, ddof=1)),
                       float(np.mean(xs)), float(np.mean(ps)), len(xs), skipped)
    log.info(
        f"noise floor ({shots} shots, {floor.repeats} repeats): σ_X={floor.sigma_x * 1e9:.3f} nm, "
        f"σ_P={floor.sigma_p * 1e27:.3f} zN·µs"
    )
    return floor


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def _fmt(value: float) -> str:
    return f"{value:.12g}"


def render_decode_tables(tables: DecodeTables) -> str:
    lines = [
        f"# {TABLE_FORMAT}",
        f"# phase_ref_rad: {_fmt(tables.phase_ref)}",
        f"# contrast_ref: {_fmt(tables.contrast_ref)}",
        f"# build_config: {json.dumps(tables.build_config, sort_keys=True)}",
        "# columns: branch[0=position,1=momentum] X_m[m] P_kgms[kg*m/s] phi0_rad[rad] contrast[1]",
    ]
    for x, phi0, c in zip(tables.pos_x, tables.pos_phi0, tables.pos_contrast):
        lines.append(" ".join(["0", _fmt(x), "0", _fmt(phi0), _fmt(c)]))
    for p, c in zip(tables.mom_p, tables.mom_contrast):
        lines.append(" ".join(["1", "0", _fmt(p), "nan", _fmt(c)]))
    return "\n".join(lines) + "\n"


def parse_decode_tables(text: str) -> DecodeTables:
    lines = text.splitlines()
    if not lines or lines[0].strip() != f"# {TABLE_FORMAT}":
        raise DecodeError(f"not a decode table file (expected '# {TABLE_FORMAT}' header)")
    meta, rows = {}, []
    for line in lines[1:]:
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition(":")
            meta[key.strip()] = value.strip()
        elif line.strip():
            rows.append([float(v) for v in line.split()])
    data = np.array(rows, dtype=float).reshape(-1, 5)
    pos, mom = data[data[:, 0] == 0], data[data[:, 0] == 1]
    try:
        return DecodeTables(
            pos_x=pos[:, 1], pos_phi0=pos[:, 3], pos_contrast=pos[:, 4],
            mom_p=mom[:, 2], mom_contrast=mom[:, 4],
            phase_ref=float(meta["phase_ref_rad"]),
            contrast_ref=float(meta["contrast_ref"]),
            build_config=json.loads(meta.get("build_config", "{}")),
        )
    except KeyError as exc:
        raise DecodeError(f"decode table file lacks metadata {exc}") from exc


def save_decode_tables(tables: DecodeTables, path: Path) -> None:
    save_text(render_decode_tables(tables), path)


def load_decode_tables(path: Path) -> DecodeTables:
    return parse_decode_tables(Path(path).read_text(encoding="utf-8"))
