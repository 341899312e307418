"""
Time evolution of the spin ⊗ mode system.
=========================================

All dynamics run in the frame rotating at the drive frequency with the
rotating-wave approximation applied. During a flash

    H = ω a†a + (δ/2) σ_z + (Ω/2)(e^{iφ} C σ₊ + e^{−iφ} C† σ₋),    C = e^{iη(a+a†)}

in rad/s, and between flashes only the mode term (plus δσ_z/2 when a frame
with non-zero detuning is supplied) acts.

The drive phase enters through U(φ) = R(φ) U(0) R(φ)†, R(φ) = diag(e^{−iφ/2}, e^{iφ/2})
on the spin, so one cached propagator serves every flash of a train.

Public functions take and return SpinMotionState. The underscore kernels also
accept (2N, K) amplitude matrices whose columns are independent pure states;
sequence-engine uses them to propagate a thermal ensemble in one pass.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Optional

import numpy as np

from ionstrobe.hilbert.hilbert_core import (
    DriveParams,
    FrameParams,
    HilbertSpec,
    ModeParams,
    SpinMotionState,
    _coupling_matrix,
    expm_hermitian,
    mean_phonons,
    tail_population,
)
from ionstrobe.shared.errors import TruncationError

log = logging.getLogger(__name__)

ENVELOPES = ("gaussian", "exponential", "none")
DEFAULT_MW_RABI = 2 * math.pi * 0.1e6


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PulseTrainSpec:
    n_flashes: int
    flash_dur: float            # δt, s
    cycle_dur: float            # Δt, s
    drive: DriveParams
    base_phase: float = 0.0
    phase_step: float = 0.0     # δφ per flash

    def __post_init__(self):
        if int(self.n_flashes) != self.n_flashes or self.n_flashes < 1:
            raise ValueError(f"n_flashes must be a positive integer, got {self.n_flashes}")
        if not 0 < self.flash_dur <= self.cycle_dur:
            raise ValueError(
                f"need 0 < flash_dur ≤ cycle_dur, got {self.flash_dur} and {self.cycle_dur}"
            )

    @property
    def duration(self) -> float:
        return self.n_flashes * self.cycle_dur

    def flash_phase(self, k: int) -> float:
        return self.base_phase + k * self.phase_step

    def with_phase(self, phase: float) -> "PulseTrainSpec":
        return replace(self, base_phase=phase)


@dataclass(frozen=True)
class BackActionResult:
    n_initial: float
    n_final: float
    delta_n: float

    @classmethod
    def between(cls, n_initial: float, n_final: float) -> "BackActionResult":
        return cls(n_initial=n_initial, n_final=n_final, delta_n=n_final - n_initial)


@dataclass(frozen=True)
class DephasingSpec:
    tau: float = 70e-6
    envelope: str = "gaussian"

    def __post_init__(self):
        if self.envelope not in ENVELOPES:
            raise ValueError(f"envelope must be one of {ENVELOPES}, got {self.envelope!r}")
        if self.envelope != "none" and self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")


# ---------------------------------------------------------------------------
# Kernels (amplitude vectors or matrices)
# ---------------------------------------------------------------------------

def _scale_rows(diag: np.ndarray, amps: np.ndarray) -> np.ndarray:
    return diag[:, None] * amps if amps.ndim == 2 else diag * amps


def _free_diagonal(fock_dim: int, freq: float, t: float, detuning: float = 0.0) -> np.ndarray:
    motion = np.exp(-1j * np.arange(fock_dim) * freq * t)
    if detuning == 0.0:
        return np.concatenate([motion, motion])
    return np.concatenate([
        np.exp(0.5j * detuning * t) * motion,
        np.exp(-0.5j * detuning * t) * motion,
    ])


def _spin_phase_diagonal(fock_dim: int, phase: float) -> np.ndarray:
    return np.repeat(np.exp(np.array([-0.5j, 0.5j]) * phase), fock_dim)


@lru_cache(maxsize=64)
def _flash_propagator(
    fock_dim: int,
    rabi: float,
    eta: float,
    freq: float,
    detuning: float,
    dt: float,
) -> np.ndarray:
    """exp(−iH·dt) at drive phase 0."""
    n = np.arange(fock_dim, dtype=float)
    h = np.zeros((2 * fock_dim, 2 * fock_dim), dtype=complex)
    idx = np.arange(2 * fock_dim)
    h[idx, idx] = np.concatenate([freq * n - detuning / 2, freq * n + detuning / 2])
    coupling = _coupling_matrix(eta, fock_dim) if eta > 0 else np.eye(fock_dim)
    h[fock_dim:, :fock_dim] = 0.5 * rabi * coupling
    h[:fock_dim, fock_dim:] = 0.5 * rabi * coupling.conj().T
    u = expm_hermitian(h * dt)
    u.setflags(write=False)
    log.debug(f"flash propagator built (N={fock_dim}, Ω={rabi:.6g}, η={eta}, dt={dt:.3g})")
    return u


def _free_kernel(amps, fock_dim, mode: ModeParams, t: float, frame: Optional[FrameParams] = None):
    detuning = frame.detuning if frame is not None else 0.0
    return _scale_rows(_free_diagonal(fock_dim, mode.freq, t, detuning), amps)


def _flash_kernel(amps, fock_dim, drive: DriveParams, mode: ModeParams, frame: FrameParams, dt: float):
    if drive.rabi == 0:
        return _scale_rows(_free_diagonal(fock_dim, mode.freq, dt, frame.detuning), amps)
    u0 = _flash_propagator(fock_dim, float(drive.rabi), float(drive.eta),
                           float(mode.freq), float(frame.detuning), float(dt))
    rot = _spin_phase_diagonal(fock_dim, drive.phase)
    return _scale_rows(rot, u0 @ _scale_rows(rot.conj(), amps))


def _mw_kernel(amps, fock_dim, angle: float, phase: float):
    c = math.cos(angle / 2)
    s = math.sin(angle / 2)
    blocks = amps.reshape((2, fock_dim) + amps.shape[1:])
    down, up = blocks[0], blocks[1]
    new_down = c * down - 1j * s * np.exp(-1j * phase) * up
    new_up = -1j * s * np.exp(1j * phase) * down + c * up
    return np.concatenate([new_down, new_up], axis=0)


def _train_kernel(amps, fock_dim, train: PulseTrainSpec, mode: ModeParams, frame: FrameParams):
    dark = train.cycle_dur - train.flash_dur
    for k in range(train.n_flashes):
        drive = replace(train.drive, phase=train.flash_phase(k))
        amps = _flash_kernel(amps, fock_dim, drive, mode, frame, train.flash_dur)
        if dark > 0:
            amps = _free_kernel(amps, fock_dim, mode, dark, frame)
    return amps


def _require_truncation(amps, spec: HilbertSpec, weights: Optional[np.ndarray] = None) -> None:
    tail = tail_population(amps, spec.fock_dim)
    if weights is not None:
        tail = float(np.dot(weights, tail))
    if np.any(tail >= spec.tail_tol):
        raise TruncationError(
            f"population {float(np.max(tail)):.3e} in the top Fock levels exceeds "
            f"tail_tol={spec.tail_tol:g} (fock_dim={spec.fock_dim})"
        )


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def free_evolve(
    state: SpinMotionState,
    mode: ModeParams,
    t: float,
    frame: Optional[FrameParams] = None,
) -> SpinMotionState:
    """Fock amplitudes pick up e^{−inωt}; the spin precesses only if `frame` is detuned."""
    if t < 0:
        raise ValueError(f"evolution time must be ≥ 0, got {t}")
    amps = _free_kernel(state.amplitudes, state.spec.fock_dim, mode, t, frame)
    return SpinMotionState(amps, state.spec)


def flash_evolve(
    state: SpinMotionState,
    drive: DriveParams,
    mode: ModeParams,
    frame: FrameParams,
    dt: float,
) -> SpinMotionState:
    if dt <= 0:
        raise ValueError(f"flash duration must be positive, got {dt}")
    spec = state.spec
    amps = _flash_kernel(state.amplitudes, spec.fock_dim, drive, mode, frame, dt)
    _require_truncation(amps, spec)
    return SpinMotionState(amps, spec)


def mw_rotation(state: SpinMotionState, angle: float, phase: float) -> SpinMotionState:
    """Ideal instantaneous rotation exp(−i·angle/2·(e^{iφ}σ₊ + e^{−iφ}σ₋))."""
    amps = _mw_kernel(state.amplitudes, state.spec.fock_dim, angle, phase)
    return SpinMotionState(amps, state.spec)


def mw_pulse_duration(angle: float, mw_rabi: float = DEFAULT_MW_RABI) -> float:
    return abs(angle) / mw_rabi


def mw_pulse(
    state: SpinMotionState,
    angle: float,
    phase: float,
    mode: ModeParams,
    frame: FrameParams,
    mw_rabi: float = DEFAULT_MW_RABI,
) -> SpinMotionState:
    """Finite-duration MW pulse: an η = 0 flash lasting angle/Ω_MW."""
    drive = DriveParams(rabi=mw_rabi, phase=phase, eta=0.0)
    return flash_evolve(state, drive, mode, frame, mw_pulse_duration(angle, mw_rabi))


def run_pulse_train(
    state: SpinMotionState,
    train: PulseTrainSpec,
    mode: ModeParams,
    frame: FrameParams,
) -> SpinMotionState:
    """Flash k at phase φ + k·δφ, then dark evolution for Δt − δt; N_S times."""
    dark = train.cycle_dur - train.flash_dur
    for k in range(train.n_flashes):
        drive = replace(train.drive, phase=train.flash_phase(k))
        state = flash_evolve(state, drive, mode, frame, train.flash_dur)
        if dark > 0:
            state = free_evolve(state, mode, dark, frame)
    return state


def train_duration(train: PulseTrainSpec) -> float:
    return train.duration


def back_action(initial: SpinMotionState, final: SpinMotionState) -> BackActionResult:
    if initial.spec.fock_dim != final.spec.fock_dim:
        raise ValueError(
            f"states live in different spaces (fock_dim {initial.spec.fock_dim} "
            f"vs {final.spec.fock_dim})"
        )
    return BackActionResult.between(mean_phonons(initial), mean_phonons(final))


def dephasing_factor(spec: DephasingSpec, elapsed: float) -> float:
    if spec.envelope == "none":
        return 1.0
    if spec.envelope == "gaussian":
        return math.exp(-((elapsed / spec.tau) ** 2))
    return math.exp(-elapsed / spec.tau)


def apply_dephasing(contrast: float, spec: DephasingSpec, elapsed: float) -> float:
    if not 0.0 <= contrast <= 1.0:
        raise ValueError(f"contrast must lie in [0, 1], got {contrast}")
    return contrast * dephasing_factor(spec, elapsed)
