"""
Sequence engine — composes the Ramsey-type experimental sequences.
===================================================================

One sequence:

  1. thermal preparation   |↓⟩ ⊗ ρ_th   (exact geometric weights, or Monte-Carlo draws)
  2. excitation            D(α) or S(ζ) on the mode (optional)
  3. synchronisation       MW π/2 pulse at `sync_phase`
  4. analysis              stroboscopic pulse train at base phase φ (the scan variable)
  5. detection             P↓ = (1 − env·⟨σ_z⟩)/2 with the dephasing envelope env

ϑ0 and ζ0 refer to the motional phase at the centre of the first analysis
flash, i.e. at the stroboscopic sampling instant. The excitation is therefore
prepared advanced by the time from preparation to that instant.

With the default sync phase π the ideal Ramsey fringe is p_down = (1 + cos φ)/2.

Scans run one sequence per (outer, φ) grid point, outer-major; shot noise
uses seed base_seed + point index so results never depend on scheduling.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, NamedTuple, Optional, Sequence, Union

import numpy as np

from ionstrobe.dynamics.dynamics import (
    DEFAULT_MW_RABI,
    DephasingSpec,
    PulseTrainSpec,
    _flash_kernel,
    _mw_kernel,
    _require_truncation,
    _train_kernel,
    dephasing_factor,
    mw_pulse_duration,
)
from ionstrobe.hilbert.hilbert_core import (
    CoherentAmp,
    DriveParams,
    FrameParams,
    HilbertSpec,
    ModeParams,
    SqueezeParam,
    displacement_operator,
    squeeze_operator,
    thermal_sample,
    thermal_weights,
)
from ionstrobe.shared.errors import NumericalError, ScanPointError
from ionstrobe.shared.utils import wrap_phase

log = logging.getLogger(__name__)

Excitation = Union[None, CoherentAmp, SqueezeParam]
OUTER_VARS = ("none", "theta0", "alpha_abs", "zeta0", "zeta_abs")
MW_MODES = ("ideal", "finite")


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SequenceSpec:
    hilbert: HilbertSpec
    mode: ModeParams
    analysis: PulseTrainSpec
    frame: FrameParams = field(default_factory=FrameParams)
    excitation: Excitation = None
    sync_phase: float = math.pi
    dephasing: DephasingSpec = field(default_factory=DephasingSpec)
    n_th_samples: int = 0               # 0 = exact geometric enumeration
    sample_seed: int = 0
    mw_mode: str = "ideal"
    mw_rabi: float = DEFAULT_MW_RABI

    def __post_init__(self):
        if self.mw_mode not in MW_MODES:
            raise ValueError(f"mw_mode must be one of {MW_MODES}, got {self.mw_mode!r}")
        if self.n_th_samples < 0:
            raise ValueError(f"n_th_samples must be ≥ 0, got {self.n_th_samples}")

    @property
    def sync_duration(self) -> float:
        return mw_pulse_duration(math.pi / 2, self.mw_rabi) if self.mw_mode == "finite" else 0.0

    @property
    def elapsed(self) -> float:
        """Time between the two Ramsey π/2 operations, used for the dephasing envelope."""
        return self.sync_duration + self.analysis.duration

    def without_excitation(self) -> "SequenceSpec":
        return replace(self, excitation=None)


@dataclass(frozen=True)
class ScanSpec:
    phi_grid: Sequence[float]
    outer_grid: Sequence[float] = (0.0,)
    outer_var: str = "none"
    shots: int = 250
    base_seed: int = 0
    detection: str = "analytic"         # analytic | shots
    interleave_reference: bool = False
    reference_phi: float = math.pi / 2

    def __post_init__(self):
        object.__setattr__(self, "phi_grid", tuple(float(p) for p in self.phi_grid))
        object.__setattr__(self, "outer_grid", tuple(float(o) for o in self.outer_grid))
        if not self.phi_grid or not self.outer_grid:
            raise ValueError("scan grids must be non-empty")
        if self.shots < 1:
            raise ValueError(f"shots must be ≥ 1, got {self.shots}")
        if self.outer_var not in OUTER_VARS:
            raise ValueError(f"outer_var must be one of {OUTER_VARS}, got {self.outer_var!r}")
        if self.detection not in ("analytic", "shots"):
            raise ValueError(f"detection must be 'analytic' or 'shots', got {self.detection!r}")

    @property
    def n_points(self) -> int:
        return len(self.phi_grid) * len(self.outer_grid)


@dataclass(frozen=True)
class ScanRecord:
    phi: float
    outer: float
    p_down_mean: float
    p_down_sem: float
    sigma_z: float
    delta_n: float
    drift_estimate: float = 0.0


@dataclass(frozen=True)
class PatternField:
    wavelength: float           # m
    rotation: float             # rad, w.r.t. z
    phase_origin: float = 0.0
    amplitude: float = 1.0

    def __post_init__(self):
        if self.wavelength <= 0:
            raise ValueError(f"wavelength must be positive, got {self.wavelength}")


class SequenceOutcome(NamedTuple):
    p_down: float
    delta_n: float


class ReferencePair(NamedTuple):
    measurement: ScanRecord
    reference: Optional[ScanRecord]


# ---------------------------------------------------------------------------
# Thermal ensemble
# ---------------------------------------------------------------------------

def thermal_ensemble(spec: SequenceSpec) -> tuple[np.ndarray, np.ndarray]:
    """Initial Fock levels and weights for the |↓⟩ ⊗ thermal preparation."""
    n_th = spec.mode.n_th
    if spec.n_th_samples == 0:
        return thermal_weights(n_th, spec.hilbert.fock_dim)
    draws = thermal_sample(n_th, spec.sample_seed, size=spec.n_th_samples)
    levels, counts = np.unique(draws, return_counts=True)
    if levels[-1] >= spec.hilbert.fock_dim:
        raise ValueError(f"thermal draw n={levels[-1]} exceeds fock_dim={spec.hilbert.fock_dim}")
    return levels, counts / counts.sum()


def _ground_spin_columns(levels: np.ndarray, fock_dim: int) -> np.ndarray:
    amps = np.zeros((2 * fock_dim, len(levels)), dtype=complex)
    amps[levels, np.arange(len(levels))] = 1.0
    return amps


def _column_sigma_z(amps: np.ndarray, fock_dim: int) -> np.ndarray:
    pops = np.abs(amps) ** 2
    return pops[fock_dim:].sum(axis=0) - pops[:fock_dim].sum(axis=0)


def _column_phonons(amps: np.ndarray, fock_dim: int) -> np.ndarray:
    n = np.tile(np.arange(fock_dim), 2)
    return n @ (np.abs(amps) ** 2)


# ---------------------------------------------------------------------------
# Excitation
# ---------------------------------------------------------------------------

def excitation_operator(spec: SequenceSpec) -> Optional[np.ndarray]:
    """Mode operator preparing the excitation, advanced to the first flash centre."""
    exc = spec.excitation
    if exc is None or exc.magnitude == 0:
        return None
    lead = spec.sync_duration + spec.analysis.flash_dur / 2
    advance = spec.mode.freq * lead
    if isinstance(exc, CoherentAmp):
        return displacement_operator(replace(exc, phase=exc.phase + advance), spec.hilbert)
    return squeeze_operator(replace(exc, phase=exc.phase + 2 * advance), spec.hilbert)


def _apply_mode(op: np.ndarray, amps: np.ndarray, fock_dim: int) -> np.ndarray:
    blocks = amps.reshape(2, fock_dim, -1)
    return np.concatenate([op @ blocks[0], op @ blocks[1]], axis=0)


def _sync(amps: np.ndarray, spec: SequenceSpec) -> np.ndarray:
    n = spec.hilbert.fock_dim
    if spec.mw_mode == "finite":
        drive = DriveParams(rabi=spec.mw_rabi, phase=spec.sync_phase, eta=0.0)
        return _flash_kernel(amps, n, drive, spec.mode, spec.frame, spec.sync_duration)
    return _mw_kernel(amps, n, math.pi / 2, spec.sync_phase)


# ---------------------------------------------------------------------------
# Sequences
# ---------------------------------------------------------------------------

def _evaluate(spec: SequenceSpec, phi: float, op: Optional[np.ndarray]) -> tuple[float, float]:
    n = spec.hilbert.fock_dim
    levels, weights = thermal_ensemble(spec)
    amps = _ground_spin_columns(levels, n)
    if op is not None:
        amps = _apply_mode(op, amps, n)
    amps = _sync(amps, spec)
    n_before = _column_phonons(amps, n)

    amps = _train_kernel(amps, n, spec.analysis.with_phase(phi), spec.mode, spec.frame)
    _require_truncation(amps, spec.hilbert, weights)

    sigma_z = float(weights @ _column_sigma_z(amps, n))
    delta_n = float(weights @ (_column_phonons(amps, n) - n_before))
    env = dephasing_factor(spec.dephasing, spec.elapsed)
    p_down = min(1.0, max(0.0, 0.5 * (1.0 - env * sigma_z)))
    return p_down, delta_n


def run_sequence(spec: SequenceSpec, phi: float) -> SequenceOutcome:
    """Full sequence at analysis phase φ → (P↓, δ⟨n⟩) in analytic mode."""
    return SequenceOutcome(*_evaluate(spec, phi, excitation_operator(spec)))


def train_sigma_z(spec: SequenceSpec, train: Optional[PulseTrainSpec] = None) -> float:
    """⟨σ_z⟩ after the analysis train alone acting on |↓⟩ ⊗ thermal."""
    train = train or spec.analysis
    n = spec.hilbert.fock_dim
    levels, weights = thermal_ensemble(spec)
    amps = _train_kernel(_ground_spin_columns(levels, n), n, train, spec.mode, spec.frame)
    return float(weights @ _column_sigma_z(amps, n))


def sample_detection(p_down: float, shots: int, seed: Optional[int]) -> tuple[float, float]:
    """Mean and standard error of `shots` Bernoulli(p_down) projections."""
    if shots < 1:
        raise ValueError(f"shots must be ≥ 1, got {shots}")
    if not -1e-12 <= p_down <= 1 + 1e-12:
        raise ValueError(f"p_down must lie in [0, 1], got {p_down}")
    p = min(1.0, max(0.0, p_down))
    mean = np.random.default_rng(seed).binomial(shots, p) / shots
    return float(mean), math.sqrt(mean * (1 - mean) / shots)


# ---------------------------------------------------------------------------
# Scans
# ---------------------------------------------------------------------------

def with_outer(spec: SequenceSpec, outer_var: str, value: float) -> SequenceSpec:
    """Sequence spec with the outer scan variable set to `value`."""
    exc = spec.excitation
    if outer_var == "none":
        return spec
    if outer_var in ("theta0", "alpha_abs"):
        base = exc if isinstance(exc, CoherentAmp) else CoherentAmp(0.0)
        new = replace(base, phase=value) if outer_var == "theta0" else replace(base, magnitude=value)
    else:
        base = exc if isinstance(exc, SqueezeParam) else SqueezeParam(0.0)
        new = replace(base, phase=value) if outer_var == "zeta0" else replace(base, magnitude=value)
    return replace(spec, excitation=new)


def _drift_at(drift, index: int) -> float:
    if drift is None:
        return 0.0
    phases = np.asarray(drift.phase)
    return float(phases[index % len(phases)])


def run_scan(
    scan: ScanSpec,
    spec: SequenceSpec,
    drift=None,
    reference_fit=None,
    threads: int = 1,
) -> list[ScanRecord]:
    """
    One record per (outer, φ) pair, outer-major.

    drift:          optional PhaseTrace; measurement k sees phase[2k], its
                    interleaved α = 0 reference sees phase[2k + 1].
    reference_fit:  CosineFit of the undrifted α = 0 fringe, required when
                    scan.interleave_reference is set.
    """
    if scan.interleave_reference and reference_fit is None:
        raise ValueError("interleaved referencing needs the α = 0 reference fringe fit")

    variants = [with_outer(spec, scan.outer_var, o) for o in scan.outer_grid]
    ops = []
    for outer, variant in zip(scan.outer_grid, variants):
        try:
            ops.append(excitation_operator(variant))
        except NumericalError as exc:
            raise ScanPointError(outer, scan.phi_grid[0], exc) from exc
    reference_spec = spec.without_excitation()
    n_phi = len(scan.phi_grid)

    def point(index: int) -> tuple[ScanRecord, Optional[ScanRecord]]:
        i_outer, i_phi = divmod(index, n_phi)
        outer, phi = scan.outer_grid[i_outer], scan.phi_grid[i_phi]
        try:
            p, dn = _evaluate(variants[i_outer], phi + _drift_at(drift, 2 * index), ops[i_outer])
            ref = None
            if scan.interleave_reference:
                ref_phi = scan.reference_phi + _drift_at(drift, 2 * index + 1)
                p_ref, _ = _evaluate(reference_spec, ref_phi, None)
        except NumericalError as exc:
            raise ScanPointError(outer, phi, exc) from exc

        seed = scan.base_seed + index
        record = _record(phi, outer, p, dn, scan, seed)
        if scan.interleave_reference:
            # reference draws use a disjoint seed stream
            ref = _record(scan.reference_phi, 0.0, p_ref, 0.0, scan, seed + 1_000_003)
        return record, ref

    indices = range(scan.n_points)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(point, indices))
    else:
        results = [point(i) for i in indices]

    log.info(
        f"scan done: {len(results)} points ({len(scan.outer_grid)} × {n_phi}), "
        f"detection={scan.detection}"
    )
    if not scan.interleave_reference:
        return [r for r, _ in results]
    pairs = [ReferencePair(r, ref) for r, ref in results]
    return interleaved_reference(pairs, reference_fit, scan.reference_phi)


def _record(phi, outer, p, dn, scan: ScanSpec, seed: int) -> ScanRecord:
    if scan.detection == "shots":
        mean, sem = sample_detection(p, scan.shots, seed)
    else:
        mean, sem = p, 0.0
    return ScanRecord(phi=phi, outer=outer, p_down_mean=mean, p_down_sem=sem,
                      sigma_z=1.0 - 2.0 * mean, delta_n=dn)


def interleaved_reference(
    pairs: Iterable[ReferencePair],
    reference_fit,
    reference_phi: float = math.pi / 2,
) -> list[ScanRecord]:
    """
    Correct each measurement's phase coordinate by the drift read off its
    adjacent α = 0 reference.

    The reference runs at fixed phase reference_phi on the fringe
    offset + (C/2)cos(φ − φ0) described by `reference_fit`; the drift d
    solves p_ref = offset + (C/2)cos(reference_phi + d − φ0) on the branch
    through mid-fringe. The corrected phase coordinate is φ + d.
    """
    half = reference_fit.contrast / 2
    if half <= 0:
        raise ValueError("reference fringe has zero contrast; drift is unobservable")
    corrected = []
    for k, pair in enumerate(pairs):
        measurement, reference = pair
        if reference is None:
            raise ValueError(f"measurement record {k} (phi={measurement.phi:.6g}) has no reference")
        ratio = np.clip((reference.p_down_mean - reference_fit.offset) / half, -1.0, 1.0)
        offset = wrap_phase(reference_phi - reference_fit.phase - math.pi / 2)
        drift = float(-np.arcsin(ratio)) - offset
        corrected.append(replace(measurement, phi=measurement.phi + drift, drift_estimate=drift))
    return corrected


# ---------------------------------------------------------------------------
# Static pattern probe
# ---------------------------------------------------------------------------

def static_pattern_probe(x, z, field: PatternField, contrast: Optional[float] = None):
    """P↓ of an ion displaced statically to (x, z) under the traveling-wave pattern."""
    contrast = field.amplitude if contrast is None else contrast
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    u = x * math.sin(field.rotation) + z * math.cos(field.rotation)
    p = 0.5 + 0.5 * contrast * np.cos(2 * math.pi * u / field.wavelength + field.phase_origin)
    return float(p) if p.ndim == 0 else p


def pattern_grid(extent: float, num: int = 26) -> tuple[np.ndarray, np.ndarray]:
    """Flattened (x, z) coordinates of a num × num square grid of side `extent`."""
    axis = np.linspace(-extent / 2, extent / 2, num)
    xx, zz = np.meshgrid(axis, axis, indexing="ij")
    return xx.ravel(), zz.ravel()


def scan_table_rows(records: Sequence[ScanRecord]) -> np.ndarray:
    return np.array(
        [[r.outer, r.phi, r.p_down_mean, r.p_down_sem, r.sigma_z, r.delta_n] for r in records],
        dtype=float,
    ).reshape(-1, 6)
