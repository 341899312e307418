"""Shared pytest fixtures for the ionstrobe test suite.

Physical parameters mirror the shipped defaults: a 25 u ion on a
2π·1.3 MHz mode with n_th = 0.15, a 30-flash analysis train of 100 ns
flashes at η = 0.4 and Ω = 2π·0.3 MHz.

Heavy objects (the tuned lab train, decode tables) are session-scoped so
every module shares one build.
"""
import math

import numpy as np
import pytest

from ionstrobe.calibration.calib_fit import apply_tuning, tune_pulse_train
from ionstrobe.calibration.decode_tables import build_decode_tables
from ionstrobe.dynamics.dynamics import DephasingSpec, PulseTrainSpec
from ionstrobe.hilbert.hilbert_core import DriveParams, HilbertSpec, ModeParams, UnitScale
from ionstrobe.sequence.sequence_engine import SequenceSpec

MODE_FREQ = 2 * math.pi * 1.3e6
LAB_RABI = 2 * math.pi * 0.3e6
LAB_ETA = 0.40
FLASH = 100e-9
N_FLASHES = 30


# ---------------------------------------------------------------------------
# Small building blocks
# ---------------------------------------------------------------------------

@pytest.fixture
def small_space():
    return HilbertSpec(fock_dim=40)


@pytest.fixture
def cold_mode():
    return ModeParams(freq=MODE_FREQ, n_th=0.0)


@pytest.fixture
def lab_mode():
    return ModeParams(freq=MODE_FREQ, n_th=0.15)


@pytest.fixture
def units():
    return UnitScale.from_mode(ModeParams(freq=MODE_FREQ))


def ideal_train(mode: ModeParams, eta: float = 0.0, n_flashes: int = N_FLASHES) -> PulseTrainSpec:
    """Train whose carrier rotation is exactly π/2 when eta = 0."""
    rabi = (math.pi / 2) / (n_flashes * FLASH)
    return PulseTrainSpec(n_flashes, FLASH, mode.period, DriveParams(rabi=rabi, eta=eta))


@pytest.fixture
def motion_blind_spec(cold_mode):
    """η = 0 sequence: an ideal Ramsey experiment with the default dephasing envelope."""
    return SequenceSpec(
        hilbert=HilbertSpec(fock_dim=48),
        mode=cold_mode,
        analysis=ideal_train(cold_mode),
        dephasing=DephasingSpec(),
    )


# ---------------------------------------------------------------------------
# Lab parameters (session-scoped)
# ---------------------------------------------------------------------------

@pytest.fixture(scope="session")
def lab_spec():
    mode = ModeParams(freq=MODE_FREQ, n_th=0.15)
    train = PulseTrainSpec(N_FLASHES, FLASH, mode.period, DriveParams(rabi=LAB_RABI, eta=LAB_ETA))
    return SequenceSpec(hilbert=HilbertSpec(fock_dim=128), mode=mode, analysis=train)


@pytest.fixture(scope="session")
def lab_tuning(lab_spec):
    return tune_pulse_train(lab_spec, tol=1e-3)


@pytest.fixture(scope="session")
def tuned_spec(lab_spec, lab_tuning):
    return apply_tuning(lab_spec, lab_tuning)


@pytest.fixture(scope="session")
def lab_units():
    return UnitScale.from_mode(ModeParams(freq=MODE_FREQ))


@pytest.fixture(scope="session")
def lab_tables(tuned_spec, lab_units):
    """Decode tables for |α| ≤ 3.5 on the tuned lab train."""
    return build_decode_tables(tuned_spec, np.arange(0.25, 3.5 + 1e-9, 0.25), lab_units)


@pytest.fixture(scope="session")
def lab_tables_to_five(tuned_spec, lab_units):
    """Decode tables for |α| ≤ 5 on the default 0.25 grid, wide enough for shot-noise floors."""
    return build_decode_tables(tuned_spec, np.arange(0.25, 5.0 + 1e-9, 0.25), lab_units)
