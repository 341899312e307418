"""
Fitting and calibration
=======================
  - fit_cosine         — Ramsey fringe fit  p = offset + (C/2)·cos(φ − φ0)
  - fit_wave_pattern   — 2D traveling-wave fit  p = ½ + (A/2)·cos(2π(x sinθ + z cosθ)/λ + φ_origin)
  - tune_pulse_train   — derivative-free search for a π/2 analysis train at α = 0
  - apply_tuning       — fold a TrainTuning back into a SequenceSpec
  - derive_lamb_dicke  — η from geometry

Decode tables, observable decoding and the noise floor live in decode_tables.py.

Fits are deterministic: fixed initialisation rules, no random restarts.
Weights are 1/sem² with sem floored at 1/(2·shots); without shot counts and
without positive sems all points get equal weight and the covariance is
scaled by the reduced χ².
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.optimize import least_squares, minimize, minimize_scalar

from ionstrobe.dynamics.dynamics import PulseTrainSpec
from ionstrobe.hilbert.hilbert_core import HBAR, CoherentAmp, SqueezeParam
from ionstrobe.sequence.sequence_engine import SequenceSpec, train_sigma_z
from ionstrobe.shared.errors import FitError, TuningError
from ionstrobe.shared.utils import wrap_phase

log = logging.getLogger(__name__)

TUNE_METHODS = ("coordinate", "nelder-mead")
CONTRAST_FLOOR = 1e-9              # analytic fits below this contrast carry no phase


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CosineFit:
    offset: float
    contrast: float
    phase: float                    # φ0 in (−π, π]
    residual_rms: float
    covariance: np.ndarray          # over (offset, contrast, phase)
    phase_identifiable: bool = True
    n_iter: int = 0

    @property
    def stderr(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))


@dataclass(frozen=True)
class PatternFit:
    amplitude: float
    wavelength: float               # m
    phase_origin: float
    rotation: float                 # rad in (−π/2, π/2]
    residual_rms: float
    wavelength_err: float = float("nan")
    rotation_err: float = float("nan")
    bootstrap_samples: int = 0


@dataclass(frozen=True)
class TrainTuning:
    phase_step: float
    rabi_scale: float
    achieved_sigma_z: float
    n_evals: int = 0
    flash_scale: float = 1.0
    method: str = "coordinate"


class _Converged(Exception):
    def __init__(self, x: np.ndarray, value: float):
        self.x = np.array(x, dtype=float)
        self.value = value


# ---------------------------------------------------------------------------
# Weights
# ---------------------------------------------------------------------------

def _fit_sigmas(sem: np.ndarray, shots: Optional[int]) -> tuple[np.ndarray, bool]:
    """Per-point σ and whether they are absolute (True) or only relative."""
    if shots is not None:
        return np.maximum(sem, 1.0 / (2 * shots)), True
    if sem.size and np.all(sem > 0):
        return sem, True
    return np.ones_like(sem), False


def _as_columns(samples, min_cols: int, what: str) -> np.ndarray:
    data = np.asarray(list(samples) if not isinstance(samples, np.ndarray) else samples, dtype=float)
    if data.ndim != 2 or data.shape[1] < min_cols:
        raise FitError(f"{what} needs rows of at least {min_cols} values")
    return data


# ---------------------------------------------------------------------------
# Cosine fringe
# ---------------------------------------------------------------------------

def fit_cosine(
    samples: Iterable[Sequence[float]],
    shots: Optional[int] = None,
    max_iter: int = 100,
    step_tol: float = 1e-10,
) -> CosineFit:
    """
    Weighted least squares for p = offset + (C/2)·cos(φ − φ0).

    samples: rows (φ, p_down, sem); sem may be omitted or zero.
    Initialised from the linear problem in (offset, C·cos φ0, C·sin φ0),
    refined by Gauss-Newton in (offset, C, φ0).
    """
    data = _as_columns(samples, 2, "fit_cosine")
    if data.shape[0] < 5:
        raise FitError(f"fit_cosine needs ≥ 5 samples, got {data.shape[0]}")
    phi, p = data[:, 0], data[:, 1]
    sem = data[:, 2] if data.shape[1] > 2 else np.zeros_like(p)
    if np.ptp(phi) < math.pi:
        raise FitError(f"phase span {np.ptp(phi):.4g} rad is below π; fringe is degenerate")

    sigma, absolute = _fit_sigmas(sem, shots)
    w = 1.0 / sigma

    design = np.column_stack([np.ones_like(phi), np.cos(phi), np.sin(phi)])
    (offset, b, c), *_ = np.linalg.lstsq(design * w[:, None], p * w, rcond=None)
    params = np.array([offset, 2 * math.hypot(b, c), math.atan2(c, b)])

    for n_iter in range(1, max_iter + 1):
        arg = phi - params[2]
        resid = p - (params[0] + 0.5 * params[1] * np.cos(arg))
        jac = np.column_stack([np.ones_like(phi), 0.5 * np.cos(arg), 0.5 * params[1] * np.sin(arg)])
        step, *_ = np.linalg.lstsq(jac * w[:, None], resid * w, rcond=None)
        params = params + step
        if np.linalg.norm(step) < step_tol:
            break
    else:
        raise FitError(f"fit_cosine did not converge in {max_iter} iterations")

    offset, contrast, phase = params
    if contrast < 0:
        contrast, phase = -contrast, phase + math.pi
    phase = wrap_phase(phase)

    arg = phi - phase
    resid = p - (offset + 0.5 * contrast * np.cos(arg))
    jac = np.column_stack([np.ones_like(phi), 0.5 * np.cos(arg), 0.5 * contrast * np.sin(arg)])
    jw = jac * w[:, None]
    covariance = np.linalg.pinv(jw.T @ jw)
    if not absolute:
        covariance = covariance * float(np.sum((resid * w) ** 2)) / (len(phi) - 3)

    threshold = 2.0 / math.sqrt(shots * len(phi)) if shots else CONTRAST_FLOOR
    return CosineFit(
        offset=float(offset),
        contrast=float(contrast),
        phase=float(phase),
        residual_rms=float(np.sqrt(np.mean(resid**2))),
        covariance=covariance,
        phase_identifiable=bool(contrast > threshold),
        n_iter=n_iter,
    )


def fit_records(records, shots: Optional[int] = None) -> CosineFit:
    """fit_cosine over ScanRecords of a single outer value."""
    return fit_cosine([(r.phi, r.p_down_mean, r.p_down_sem) for r in records], shots=shots)


# ---------------------------------------------------------------------------
# 2D wave pattern
# ---------------------------------------------------------------------------

def _pattern_model(params, x, z):
    amp, lam, phase, theta = params
    u = x * np.sin(theta) + z * np.cos(theta)
    return 0.5 + 0.5 * amp * np.cos(2 * np.pi * u / lam + phase)


def _coarse_pattern(x, z, y, w2, lambdas, thetas) -> np.ndarray:
    """Best (A, λ, φ, θ) node of the grid; each node is a linear solve."""
    s, c = np.sin(thetas)[:, None], np.cos(thetas)[:, None]
    u = s * x[None, :] + c * z[None, :]
    best_ssr, best = np.inf, None
    for lam in lambdas:
        arg = 2 * np.pi * u / lam
        cs, sn = np.cos(arg), np.sin(arg)
        a11 = (w2 * cs * cs).sum(axis=1)
        a12 = (w2 * cs * sn).sum(axis=1)
        a22 = (w2 * sn * sn).sum(axis=1)
        b1 = (w2 * cs * y).sum(axis=1)
        b2 = (w2 * sn * y).sum(axis=1)
        det = a11 * a22 - a12**2
        ok = det > 1e-12 * a11 * a22
        det = np.where(ok, det, 1.0)
        ca = (a22 * b1 - a12 * b2) / det
        cb = (a11 * b2 - a12 * b1) / det
        ssr = np.where(ok, -(ca * b1 + cb * b2), np.inf)
        k = int(np.argmin(ssr))
        if ssr[k] < best_ssr:
            best_ssr = ssr[k]
            best = np.array([2 * math.hypot(ca[k], cb[k]), lam, math.atan2(-cb[k], ca[k]), thetas[k]])
    return best


def _normalise_pattern(params) -> np.ndarray:
    amp, lam, phase, theta = params
    if amp < 0:
        amp, phase = -amp, phase + math.pi
    if lam < 0:
        lam, phase = -lam, -phase
    theta = wrap_phase(theta)
    if theta > math.pi / 2:
        theta, phase = theta - math.pi, -phase
    elif theta <= -math.pi / 2:
        theta, phase = theta + math.pi, -phase
    return np.array([amp, lam, wrap_phase(phase), theta])


def _require_extent(x, z, lam: float, theta: float) -> None:
    """The grid must span at least one wavelength along the wave vector (nm inputs)."""
    extent = np.ptp(x * math.sin(theta) + z * math.cos(theta))
    if extent < lam:
        raise FitError(
            f"extent insufficient: {extent:.1f} nm along the wave vector is below "
            f"one wavelength ({lam:.1f} nm)"
        )


def _refine_pattern(x, z, p, w, start):
    res = least_squares(
        lambda q: (p - _pattern_model(q, x, z)) * w,
        start,
        method="lm",
        xtol=1e-12,
        ftol=1e-12,
        gtol=1e-12,
        max_nfev=4000,
    )
    if not res.success:
        raise FitError(f"pattern fit did not converge: {res.message}")
    return res


def fit_wave_pattern(
    points: Iterable[Sequence[float]],
    bootstrap: int = 0,
    seed: int = 0,
    shots: Optional[int] = None,
    lambda_range: tuple[float, float] = (50e-9, 500e-9),
    n_lambda: int = 160,
    theta_step: float = 0.02,
) -> PatternFit:
    """
    Fit the static-displacement pattern. points: rows (x, z, p_down[, sem]) in m.

    The coarse grid covers log-spaced λ over lambda_range and θ over
    (−π/2, π/2]; Levenberg-Marquardt refines the best node. `bootstrap`
    resamples points with replacement and refits from the best parameters.
    """
    data = _as_columns(points, 3, "fit_wave_pattern")
    if data.shape[0] < 30:
        raise FitError(f"fit_wave_pattern needs ≥ 30 points, got {data.shape[0]}")
    # nm internally keeps the parameters on comparable scales
    x, z, p = data[:, 0] * 1e9, data[:, 1] * 1e9, data[:, 2]
    sem = data[:, 3] if data.shape[1] > 3 else np.zeros_like(p)
    sigma, absolute = _fit_sigmas(sem, shots)
    w = 1.0 / sigma

    lambdas = np.geomspace(lambda_range[0] * 1e9, lambda_range[1] * 1e9, n_lambda)
    thetas = np.arange(-math.pi / 2 + theta_step, math.pi / 2 + 1e-12, theta_step)
    start = _coarse_pattern(x, z, p - 0.5, w**2, lambdas, thetas)
    if start is None:
        raise FitError("pattern coarse search found no well-conditioned node")
    log.debug(f"pattern coarse start: λ={start[1]:.2f} nm, θ={start[3]:.3f} rad")
    _require_extent(x, z, start[1], start[3])

    res = _refine_pattern(x, z, p, w, start)
    best = _normalise_pattern(res.x)
    amp, lam, phase, theta = best
    _require_extent(x, z, lam, theta)

    jac = res.jac
    cov = np.linalg.pinv(jac.T @ jac)
    if not absolute:
        cov = cov * float(np.sum(res.fun**2)) / max(1, len(p) - 4)
    lam_err, theta_err = math.sqrt(max(cov[1, 1], 0.0)), math.sqrt(max(cov[3, 3], 0.0))

    if bootstrap > 0:
        rng = np.random.default_rng(seed)
        lams, thetas_b = [], []
        for _ in range(bootstrap):
            idx = rng.integers(0, len(p), len(p))
            try:
                q = _normalise_pattern(_refine_pattern(x[idx], z[idx], p[idx], w[idx], best).x)
            except FitError as exc:
                log.debug(f"bootstrap refit skipped: {exc}")
                continue
            lams.append(q[1])
            # θ and θ ± π describe the same pattern
            thetas_b.append(theta + wrap_phase(2 * (q[3] - theta)) / 2)
        if len(lams) >= 2:
            lam_err, theta_err = float(np.std(lams, ddof=1)), float(np.std(thetas_b, ddof=1))
        log.info(f"pattern bootstrap: {len(lams)}/{bootstrap} refits")

    resid = p - _pattern_model(best, x, z)
    return PatternFit(
        amplitude=float(amp),
        wavelength=float(lam) * 1e-9,
        phase_origin=float(phase),
        rotation=float(theta),
        residual_rms=float(np.sqrt(np.mean(resid**2))),
        wavelength_err=lam_err * 1e-9,
        rotation_err=theta_err,
        bootstrap_samples=bootstrap,
    )


# ---------------------------------------------------------------------------
# Pulse-train tuning
# ---------------------------------------------------------------------------

def ideal_rabi_scale(train: PulseTrainSpec) -> float:
    """Scale on Ω giving N_S·Ω·δt·e^{−η²/2} = π/2 (carrier of the ground state)."""
    drive = train.drive
    if drive.rabi <= 0:
        raise ValueError("train drive has zero Rabi rate; nothing to scale")
    return (math.pi / 2) / (
        train.n_flashes * drive.rabi * train.flash_dur * math.exp(-drive.eta**2 / 2)
    )


def apply_tuning(spec: SequenceSpec, tuning: TrainTuning) -> SequenceSpec:
    train = spec.analysis
    flash = train.flash_dur * tuning.flash_scale
    if flash > train.cycle_dur:
        raise ValueError(f"tuned flash {flash:.4g} s exceeds the cycle {train.cycle_dur:.4g} s")
    tuned = replace(
        train,
        drive=replace(train.drive, rabi=train.drive.rabi * tuning.rabi_scale),
        phase_step=tuning.phase_step,
        flash_dur=flash,
    )
    return replace(spec, analysis=tuned)


def _has_excitation(spec: SequenceSpec) -> bool:
    exc = spec.excitation
    return isinstance(exc, (CoherentAmp, SqueezeParam)) and exc.magnitude > 0


def tune_pulse_train(
    spec: SequenceSpec,
    tol: float = 1e-3,
    method: str = "coordinate",
    wide: bool = False,
    start: Optional[Sequence[float]] = None,
    max_evals: int = 300,
    max_sweeps: int = 20,
) -> TrainTuning:
    """
    Find (rabi_scale, δφ[, flash_scale]) with |⟨σ_z⟩| ≤ tol after the train
    alone on |↓⟩ ⊗ thermal, i.e. a π/2 rotation at α = 0.

    coordinate:   alternating bounded golden-section/Brent line searches,
                  first on rabi_scale within [0.5, 1.5]·s0, then on δφ within ±0.3 rad
    nelder-mead:  simplex descent on the same objective

    rabi_scale multiplies the Rabi rate already in spec.analysis; s0 is the
    carrier estimate from ideal_rabi_scale. The search stops at the first
    point meeting the tolerance.
    """
    if _has_excitation(spec):
        raise ValueError("train tuning runs at α = 0 (and ζ = 0)")
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    if method not in TUNE_METHODS:
        raise ValueError(f"method must be one of {TUNE_METHODS}, got {method!r}")

    train = spec.analysis
    s0 = ideal_rabi_scale(train)
    bounds = [(0.5 * s0, 1.5 * s0), (-0.3, 0.3)]
    x0 = [s0, 0.0]
    if wide:
        bounds.append((0.5, min(1.5, train.cycle_dur / train.flash_dur)))
        x0.append(1.0)
    if start is not None:
        x0 = list(start)[: len(x0)] + x0[len(start):]

    evals = 0
    best = {"f": math.inf, "x": np.array(x0, dtype=float)}

    def as_tuning(x, value: float) -> TrainTuning:
        return TrainTuning(
            phase_step=float(x[1]),
            rabi_scale=float(x[0]),
            achieved_sigma_z=abs(value),
            n_evals=evals,
            flash_scale=float(x[2]) if wide else 1.0,
            method=method,
        )

    def objective(x) -> float:
        nonlocal evals
        if evals >= max_evals:
            raise TuningError(
                f"train tuning exhausted {max_evals} evaluations; best |⟨σ_z⟩|={best['f']:.3e}"
            )
        evals += 1
        value = train_sigma_z(apply_tuning(spec, as_tuning(x, 0.0)))
        if abs(value) < best["f"]:
            best.update(f=abs(value), x=np.array(x, dtype=float))
        if abs(value) <= tol:
            raise _Converged(x, value)
        return value * value

    try:
        objective(np.array(x0, dtype=float))
        if method == "coordinate":
            x = np.array(x0, dtype=float)
            for sweep in range(max_sweeps):
                before = best["f"]
                for i, (lo, hi) in enumerate(bounds):
                    def line(v, i=i):
                        trial = x.copy()
                        trial[i] = v
                        return objective(trial)
                    minimize_scalar(
                        line, bounds=(lo, hi), method="bounded",
                        options={"xatol": 1e-10 * (hi - lo), "maxiter": 80},
                    )
                    x = best["x"].copy()
                log.debug(f"tuning sweep {sweep}: best |⟨σ_z⟩|={best['f']:.3e}")
                if best["f"] >= before * (1 - 1e-9):
                    break
        else:
            minimize(
                objective, np.array(x0, dtype=float), method="Nelder-Mead",
                options={"xatol": 1e-10, "fatol": 1e-16, "maxfev": max_evals},
            )
    except _Converged as done:
        tuning = as_tuning(done.x, done.value)
        log.info(
            f"train tuned ({method}): rabi_scale={tuning.rabi_scale:.6g}, "
            f"δφ={tuning.phase_step:.4g} rad, |⟨σ_z⟩|={tuning.achieved_sigma_z:.2e}, "
            f"{tuning.n_evals} evaluations"
        )
        return tuning

    raise TuningError(
        f"no train reached |⟨σ_z⟩| ≤ {tol:g} after {evals} evaluations "
        f"(best {best['f']:.3e} at {np.round(best['x'], 6).tolist()})"
    )


# ---------------------------------------------------------------------------
# Lamb-Dicke parameter
# ---------------------------------------------------------------------------

def derive_lamb_dicke(
    mass: float,
    freq: float,
    eff_wavelength: float,
    projection_angle: float,
    hbar: float = HBAR,
) -> float:
    """η = (2π/λ_eff)·cos(projection)·√(ħ/(2mω)). λ_eff = inf gives 0."""
    if mass <= 0 or freq <= 0 or eff_wavelength <= 0:
        raise ValueError("mass, freq and eff_wavelength must be positive")
    if abs(projection_angle) > math.pi / 2:
        raise ValueError(f"|projection_angle| must be ≤ π/2, got {projection_angle}")
    if math.isclose(abs(projection_angle), math.pi / 2):
        return 0.0
    return (2 * math.pi / eff_wavelength) * math.cos(projection_angle) * math.sqrt(
        hbar / (2 * mass * freq)
    )
