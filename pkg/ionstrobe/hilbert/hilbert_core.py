"""
Truncated Fock-space representation of one spin coupled to one motional mode.
==============================================================================

Basis ordering is spin-major: index = s·N + n with s = 0 for |↓⟩, s = 1 for
|↑⟩ and n the Fock level (N = fock_dim). Full-space operators are therefore
``np.kron(spin_2x2, mode_NxN)``.

σ_z convention: σ_z|↓⟩ = −|↓⟩, hence P↓ = (1 − ⟨σ_z⟩)/2.

Every matrix exponential is taken from the eigendecomposition of a Hermitian
generator K, returning exp(−iK).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Optional, Union

import numpy as np
from scipy.linalg import eigh
from scipy.special import eval_genlaguerre, gammaln

from ionstrobe.shared.errors import TruncationError

log = logging.getLogger(__name__)

# ---------------------------------------------------------------------------
# Constants (CODATA defaults; overridable through UnitScale)
# ---------------------------------------------------------------------------
HBAR = 1.054571817e-34          # J·s
AMU = 1.66053906660e-27         # kg
DEFAULT_MASS_AMU = 25.0

DOWN, UP = 0, 1
SpinLabel = Union[int, str]


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HilbertSpec:
    fock_dim: int = 128
    tail_tol: float = 1e-4

    def __post_init__(self):
        if int(self.fock_dim) != self.fock_dim or self.fock_dim < 2:
            raise ValueError(f"fock_dim must be an integer ≥ 2, got {self.fock_dim}")
        if not 0.0 < self.tail_tol < 1.0:
            raise ValueError(f"tail_tol must lie in (0, 1), got {self.tail_tol}")

    @property
    def dim(self) -> int:
        return 2 * self.fock_dim


@dataclass(frozen=True, eq=False)
class SpinMotionState:
    """Pure state over spin(2) ⊗ Fock(N), spin-major amplitude vector."""

    amplitudes: np.ndarray
    spec: HilbertSpec

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (self.spec.dim,):
            raise ValueError(
                f"amplitude vector has shape {amps.shape}, expected ({self.spec.dim},)"
            )
        object.__setattr__(self, "amplitudes", amps)

    @property
    def blocks(self) -> np.ndarray:
        """(2, N) view: row 0 is the ↓ block, row 1 the ↑ block."""
        return self.amplitudes.reshape(2, self.spec.fock_dim)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def fock_populations(self) -> np.ndarray:
        return np.sum(np.abs(self.blocks) ** 2, axis=0)


@dataclass(frozen=True)
class ModeParams:
    freq: float                 # ω_m, rad/s
    n_th: float = 0.0
    mode_angle: float = 0.0     # rad, mode axis relative to z

    def __post_init__(self):
        if self.freq <= 0:
            raise ValueError(f"mode frequency must be positive, got {self.freq}")
        if self.n_th < 0:
            raise ValueError(f"n_th must be ≥ 0, got {self.n_th}")
        if abs(self.mode_angle) > math.pi / 2:
            raise ValueError(f"|mode_angle| must be ≤ π/2, got {self.mode_angle}")

    @property
    def period(self) -> float:
        return 2 * math.pi / self.freq


@dataclass(frozen=True)
class FrameParams:
    spin_freq: float = 0.0      # ω_z, rad/s (bookkeeping only; dynamics run in the drive frame)
    detuning: float = 0.0       # δ = ω_drive − ω_z, rad/s


@dataclass(frozen=True)
class DriveParams:
    rabi: float                 # Ω, rad/s
    phase: float = 0.0
    eta: float = 0.0            # 0 = motion-insensitive (MW-like) drive

    def __post_init__(self):
        if self.rabi < 0:
            raise ValueError(f"rabi must be ≥ 0, got {self.rabi}")
        if self.eta < 0:
            raise ValueError(f"eta must be ≥ 0, got {self.eta}")


@dataclass(frozen=True)
class CoherentAmp:
    magnitude: float
    phase: float = 0.0          # ϑ0

    def __post_init__(self):
        if self.magnitude < 0:
            raise ValueError(f"|α| must be ≥ 0, got {self.magnitude}")

    @property
    def value(self) -> complex:
        return self.magnitude * np.exp(1j * self.phase)


@dataclass(frozen=True)
class SqueezeParam:
    magnitude: float
    phase: float = 0.0          # ζ0

    def __post_init__(self):
        if self.magnitude < 0:
            raise ValueError(f"|ζ| must be ≥ 0, got {self.magnitude}")

    @property
    def value(self) -> complex:
        return self.magnitude * np.exp(1j * self.phase)


@dataclass(frozen=True)
class UnitScale:
    hbar: float
    mass: float                 # kg
    x_zpf: float                # m
    p_zpf: float                # kg·m/s

    @classmethod
    def from_mode(
        cls,
        mode: ModeParams,
        mass_amu: float = DEFAULT_MASS_AMU,
        hbar: float = HBAR,
    ) -> "UnitScale":
        mass = mass_amu * AMU
        return cls(
            hbar=hbar,
            mass=mass,
            x_zpf=math.sqrt(hbar / (2 * mass * mode.freq)),
            p_zpf=math.sqrt(hbar * mass * mode.freq / 2),
        )


class TruncationReport(NamedTuple):
    passed: bool
    tail_population: float
    levels_checked: int


# ---------------------------------------------------------------------------
# Matrix helpers
# ---------------------------------------------------------------------------

def expm_hermitian(generator: np.ndarray) -> np.ndarray:
    """Return exp(−iK) for a Hermitian generator K."""
    w, v = eigh(generator)
    return (v * np.exp(-1j * w)) @ v.conj().T


def _lowering(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1)


def _spin_index(spin: SpinLabel) -> int:
    if spin in (DOWN, "down", "↓"):
        return DOWN
    if spin in (UP, "up", "↑"):
        return UP
    raise ValueError(f"unknown spin label {spin!r}; use 'down'/'up' or 0/1")


def _require_dim(op: np.ndarray, dim: int, what: str) -> None:
    if op.shape != (dim, dim):
        raise ValueError(f"{what} has shape {op.shape}, expected ({dim}, {dim})")


# ---------------------------------------------------------------------------
# Operators
# ---------------------------------------------------------------------------

def build_mode_operators(spec: HilbertSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Lowering a (a[n−1, n] = √n), raising a† and number operator n = a†a."""
    a = _lowering(spec.fock_dim).astype(complex)
    a_dag = a.conj().T
    return a, a_dag, a_dag @ a


def spin_operators(spec: HilbertSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Full-space σ_z, σ₊ = |↑⟩⟨↓| and σ₋."""
    eye = np.eye(spec.fock_dim)
    sz = np.diag([-1.0, 1.0])
    sp = np.array([[0.0, 0.0], [1.0, 0.0]])
    return (
        np.kron(sz, eye).astype(complex),
        np.kron(sp, eye).astype(complex),
        np.kron(sp.T, eye).astype(complex),
    )


def lift_mode_operator(op: np.ndarray, spec: HilbertSpec) -> np.ndarray:
    """Embed an N×N mode operator as I₂ ⊗ op."""
    _require_dim(op, spec.fock_dim, "mode operator")
    return np.kron(np.eye(2), op)


@lru_cache(maxsize=32)
def _coupling_matrix(eta: float, fock_dim: int) -> np.ndarray:
    # Evaluated in an enlarged space and cropped: the retained block then
    # carries the infinite-space matrix elements instead of the edge artefacts
    # of a truncated exponential.
    work = fock_dim + max(32, fock_dim // 2)
    a = _lowering(work)
    c = expm_hermitian(-eta * (a + a.T))[:fock_dim, :fock_dim]
    c.setflags(write=False)
    return c


def coupling_operator(eta: float, spec: HilbertSpec) -> np.ndarray:
    """C(η) = exp[iη(a + a†)] on the retained Fock levels."""
    if eta < 0:
        raise ValueError(f"eta must be ≥ 0, got {eta}")
    if eta == 0:
        return np.eye(spec.fock_dim, dtype=complex)
    return _coupling_matrix(float(eta), spec.fock_dim).copy()


def coupling_table_analytic(eta: float, spec: HilbertSpec) -> np.ndarray:
    """
    ⟨m|e^{iη(a+a†)}|n⟩ from the closed form

        e^{−η²/2} (iη)^{|m−n|} √(n<!/n>!) L_{n<}^{|m−n|}(η²)

    The matrix is symmetric. Used as the oracle for coupling_operator.
    """
    if eta < 0:
        raise ValueError(f"eta must be ≥ 0, got {eta}")
    dim = spec.fock_dim
    if eta == 0:
        return np.eye(dim, dtype=complex)

    m, n = np.meshgrid(np.arange(dim), np.arange(dim), indexing="ij")
    lo = np.minimum(m, n)
    d = np.abs(m - n)
    log_ratio = 0.5 * (gammaln(lo + 1) - gammaln(lo + d + 1))
    magnitude = np.exp(-eta**2 / 2 + d * math.log(eta) + log_ratio)
    return magnitude * (1j ** d) * eval_genlaguerre(lo, d, eta**2)


def _check_coherent_truncation(magnitude: float, spec: HilbertSpec) -> None:
    needed = 4 * magnitude**2 + 20
    if spec.fock_dim < needed:
        raise TruncationError(
            f"|α|={magnitude:.4g} needs fock_dim ≥ {math.ceil(needed)}, have {spec.fock_dim}"
        )


def _check_squeeze_truncation(magnitude: float, spec: HilbertSpec) -> None:
    needed = 20 * math.exp(2 * magnitude)
    if spec.fock_dim < needed:
        raise TruncationError(
            f"|ζ|={magnitude:.4g} needs fock_dim ≥ {math.ceil(needed)}, have {spec.fock_dim}"
        )


def displacement_operator(
    alpha: CoherentAmp,
    spec: HilbertSpec,
    strict: bool = True,
) -> np.ndarray:
    """D(α) = exp(αa† − α*a). `strict=False` skips the truncation rule."""
    if strict:
        _check_coherent_truncation(alpha.magnitude, spec)
    if alpha.magnitude == 0:
        return np.eye(spec.fock_dim, dtype=complex)
    a, a_dag, _ = build_mode_operators(spec)
    z = alpha.value
    return expm_hermitian(1j * (z * a_dag - np.conj(z) * a))


def squeeze_operator(
    zeta: SqueezeParam,
    spec: HilbertSpec,
    strict: bool = True,
) -> np.ndarray:
    """S(ζ) = exp(½(ζ* a² − ζ a†²))."""
    if strict:
        _check_squeeze_truncation(zeta.magnitude, spec)
    if zeta.magnitude == 0:
        return np.eye(spec.fock_dim, dtype=complex)
    a, a_dag, _ = build_mode_operators(spec)
    z = zeta.value
    return expm_hermitian(0.5j * (np.conj(z) * (a @ a) - z * (a_dag @ a_dag)))


# ---------------------------------------------------------------------------
# States
# ---------------------------------------------------------------------------

def make_initial_state(spin: SpinLabel, fock_index: int, spec: HilbertSpec) -> SpinMotionState:
    if not 0 <= fock_index < spec.fock_dim:
        raise ValueError(f"fock_index {fock_index} outside 0..{spec.fock_dim - 1}")
    amps = np.zeros(spec.dim, dtype=complex)
    amps[_spin_index(spin) * spec.fock_dim + fock_index] = 1.0
    return SpinMotionState(amps, spec)


def thermal_sample(n_th: float, rng_seed: Optional[int], size: Optional[int] = None):
    """Draw Fock level(s) from p(n) = n_th^n / (1 + n_th)^(n+1)."""
    if n_th < 0:
        raise ValueError(f"n_th must be ≥ 0, got {n_th}")
    rng = np.random.default_rng(rng_seed)
    # numpy's geometric law counts trials (support ≥ 1)
    draws = rng.geometric(1.0 / (1.0 + n_th), size=size) - 1
    return int(draws) if size is None else draws


def thermal_weights(
    n_th: float,
    fock_dim: int,
    tail: float = 1e-6,
) -> tuple[np.ndarray, np.ndarray]:
    """Fock levels and renormalised geometric weights until the tail drops below `tail`."""
    if n_th < 0:
        raise ValueError(f"n_th must be ≥ 0, got {n_th}")
    if n_th == 0:
        return np.array([0]), np.array([1.0])
    ratio = n_th / (1.0 + n_th)
    count = int(math.ceil(math.log(tail) / math.log(ratio)))
    count = max(1, min(count, fock_dim))
    levels = np.arange(count)
    weights = ratio**levels / (1.0 + n_th)
    return levels, weights / weights.sum()


def apply_operator(op: np.ndarray, state: SpinMotionState) -> SpinMotionState:
    """Apply a full-space (2N×2N) or mode-space (N×N) operator."""
    spec = state.spec
    if op.shape == (spec.fock_dim, spec.fock_dim):
        return SpinMotionState((state.blocks @ op.T).reshape(-1), spec)
    _require_dim(op, spec.dim, "operator")
    return SpinMotionState(op @ state.amplitudes, spec)


def coherent_state(alpha: CoherentAmp, spec: HilbertSpec, spin: SpinLabel = DOWN) -> SpinMotionState:
    return apply_operator(displacement_operator(alpha, spec), make_initial_state(spin, 0, spec))


def squeezed_vacuum(zeta: SqueezeParam, spec: HilbertSpec, spin: SpinLabel = DOWN) -> SpinMotionState:
    return apply_operator(squeeze_operator(zeta, spec), make_initial_state(spin, 0, spec))


# ---------------------------------------------------------------------------
# Expectation values
# ---------------------------------------------------------------------------

def expect(observable: np.ndarray, state: SpinMotionState, hermitian: Optional[bool] = None):
    """⟨ψ|O|ψ⟩. Hermitian observables return a real float."""
    spec = state.spec
    if observable.shape == (spec.fock_dim, spec.fock_dim):
        observable = lift_mode_operator(observable, spec)
    _require_dim(observable, spec.dim, "observable")

    value = np.vdot(state.amplitudes, observable @ state.amplitudes)
    if hermitian is None:
        hermitian = np.allclose(observable, observable.conj().T)
    if not hermitian:
        return complex(value)
    if abs(value.imag) >= 1e-10:
        raise ValueError(f"Hermitian observable produced imaginary part {value.imag:.3e}")
    return float(value.real)


def sigma_z_expect(state: SpinMotionState) -> float:
    pops = np.abs(state.blocks) ** 2
    return float(pops[UP].sum() - pops[DOWN].sum())


def mean_phonons(state: SpinMotionState) -> float:
    return float(np.dot(np.arange(state.spec.fock_dim), state.fock_populations()))


def _mean_lowering(state: SpinMotionState) -> complex:
    b = state.blocks
    root = np.sqrt(np.arange(1, state.spec.fock_dim))
    return complex(np.sum(np.conj(b[:, :-1]) * root * b[:, 1:]))


def quadratures_si(state: SpinMotionState, units: UnitScale) -> tuple[float, float]:
    """(⟨X⟩ in m, ⟨P⟩ in kg·m/s) with X = x_zpf(a + a†), P = p_zpf·i(a† − a)."""
    mean_a = _mean_lowering(state)
    return 2 * units.x_zpf * mean_a.real, 2 * units.p_zpf * mean_a.imag


def quadrature_variances(state: SpinMotionState, units: UnitScale) -> tuple[float, float]:
    """(Var X in m², Var P in (kg·m/s)²)."""
    a, a_dag, _ = build_mode_operators(state.spec)
    x_op = a + a_dag
    p_op = 1j * (a_dag - a)
    x_mean = expect(x_op, state, hermitian=True)
    p_mean = expect(p_op, state, hermitian=True)
    var_x = expect(x_op @ x_op, state, hermitian=True) - x_mean**2
    var_p = expect(p_op @ p_op, state, hermitian=True) - p_mean**2
    return units.x_zpf**2 * var_x, units.p_zpf**2 * var_p


# ---------------------------------------------------------------------------
# Truncation
# ---------------------------------------------------------------------------

def _tail_levels(fock_dim: int) -> int:
    return max(1, math.ceil(0.05 * fock_dim))


def tail_population(amplitudes: np.ndarray, fock_dim: int) -> np.ndarray:
    """Population of the top 5 % Fock levels; per column for (2N, K) inputs."""
    k = _tail_levels(fock_dim)
    blocks = amplitudes.reshape((2, fock_dim) + amplitudes.shape[1:])
    return np.sum(np.abs(blocks[:, fock_dim - k:]) ** 2, axis=(0, 1))


def check_truncation(state: SpinMotionState, spec: Optional[HilbertSpec] = None) -> TruncationReport:
    spec = spec or state.spec
    tail = float(tail_population(state.amplitudes, spec.fock_dim))
    return TruncationReport(
        passed=tail < spec.tail_tol,
        tail_population=tail,
        levels_checked=_tail_levels(spec.fock_dim),
    )
