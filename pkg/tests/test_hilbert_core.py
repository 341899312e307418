"""Tests: truncated spin ⊗ Fock space, operators, states and unit scales."""
import math

import numpy as np
import pytest

from ionstrobe.calibration.calib_fit import derive_lamb_dicke
from ionstrobe.hilbert.hilbert_core import (
    CoherentAmp,
    HilbertSpec,
    ModeParams,
    SpinMotionState,
    SqueezeParam,
    UnitScale,
    apply_operator,
    build_mode_operators,
    check_truncation,
    coherent_state,
    coupling_operator,
    coupling_table_analytic,
    displacement_operator,
    expect,
    make_initial_state,
    mean_phonons,
    quadrature_variances,
    quadratures_si,
    sigma_z_expect,
    spin_operators,
    squeeze_operator,
    squeezed_vacuum,
    thermal_sample,
    thermal_weights,
)
from ionstrobe.shared.errors import TruncationError

from tests.conftest import MODE_FREQ


# ---------------------------------------------------------------------------
# Spaces and basis states
# ---------------------------------------------------------------------------

def test_hilbert_spec_rejects_tiny_space():
    with pytest.raises(ValueError):
        HilbertSpec(fock_dim=1)


def test_hilbert_spec_rejects_bad_tail_tol():
    with pytest.raises(ValueError):
        HilbertSpec(fock_dim=10, tail_tol=0.0)


def test_initial_state_is_spin_major(small_space):
    state = make_initial_state("up", 3, small_space)
    assert state.amplitudes[small_space.fock_dim + 3] == 1.0
    assert state.norm() == pytest.approx(1.0)
    assert sigma_z_expect(state) == pytest.approx(1.0)


def test_initial_state_rejects_out_of_range_level(small_space):
    with pytest.raises(ValueError):
        make_initial_state("down", small_space.fock_dim, small_space)


def test_state_rejects_wrong_shape(small_space):
    with pytest.raises(ValueError):
        SpinMotionState(np.zeros(small_space.fock_dim), small_space)


def test_sigma_z_of_down_is_minus_one(small_space):
    sz, sp, sm = spin_operators(small_space)
    down = make_initial_state("down", 0, small_space)
    assert expect(sz, down) == pytest.approx(-1.0)
    raised = SpinMotionState(sp @ down.amplitudes, small_space)
    assert sigma_z_expect(raised) == pytest.approx(1.0)
    assert np.allclose(sm @ raised.amplitudes, down.amplitudes)


def test_expect_rejects_mismatched_operator(small_space):
    with pytest.raises(ValueError):
        expect(np.eye(7), make_initial_state("down", 0, small_space))


# ---------------------------------------------------------------------------
# Coupling operator
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("eta", [0.18, 0.23, 0.40])
def test_coupling_operator_matches_laguerre_elements(eta):
    spec = HilbertSpec(fock_dim=60)
    numeric = coupling_operator(eta, spec)
    analytic = coupling_table_analytic(eta, spec)
    assert np.max(np.abs(numeric[:48, :48] - analytic[:48, :48])) < 1e-8


def test_coupling_operator_unitary_on_low_levels():
    spec = HilbertSpec(fock_dim=60)
    c = coupling_operator(0.4, spec)
    product = c.conj().T @ c
    assert np.allclose(product[:30, :30], np.eye(30), atol=1e-10)


def test_coupling_operator_is_identity_without_coupling(small_space):
    assert np.array_equal(coupling_operator(0.0, small_space), np.eye(small_space.fock_dim))


def test_coupling_operator_returns_a_writable_copy(small_space):
    c = coupling_operator(0.3, small_space)
    c[0, 0] = 0.0
    assert coupling_operator(0.3, small_space)[0, 0] != 0.0


def test_coupling_operator_rejects_negative_eta(small_space):
    with pytest.raises(ValueError):
        coupling_operator(-0.1, small_space)


# ---------------------------------------------------------------------------
# Displacement and squeezing
# ---------------------------------------------------------------------------

def test_coherent_state_mean_phonons():
    state = coherent_state(CoherentAmp(3.0), HilbertSpec(fock_dim=128))
    assert mean_phonons(state) == pytest.approx(9.0, abs=1e-6)


def test_squeezed_vacuum_mean_phonons():
    state = squeezed_vacuum(SqueezeParam(1.0), HilbertSpec(fock_dim=160))
    assert mean_phonons(state) == pytest.approx(math.sinh(1.0) ** 2, abs=1e-6)


def test_coherent_state_is_minimum_uncertainty(units):
    state = coherent_state(CoherentAmp(3.0, 0.7), HilbertSpec(fock_dim=128))
    var_x, var_p = quadrature_variances(state, units)
    assert var_x * var_p == pytest.approx((units.hbar / 2) ** 2, rel=1e-6)


def test_squeezing_phase_zero_squeezes_position(units):
    state = squeezed_vacuum(SqueezeParam(0.5, 0.0), HilbertSpec(fock_dim=80))
    var_x, var_p = quadrature_variances(state, units)
    assert var_x == pytest.approx(units.x_zpf**2 * math.exp(-1.0), rel=1e-6)
    assert var_p == pytest.approx(units.p_zpf**2 * math.exp(1.0), rel=1e-6)


def test_coherent_quadratures(units):
    state = coherent_state(CoherentAmp(2.0, math.pi / 2), HilbertSpec(fock_dim=64))
    x, p = quadratures_si(state, units)
    assert x == pytest.approx(0.0, abs=1e-9 * units.x_zpf)
    assert p == pytest.approx(4.0 * units.p_zpf, rel=1e-9)


def test_displacement_operator_is_unitary():
    spec = HilbertSpec(fock_dim=64)
    d = displacement_operator(CoherentAmp(2.5, 1.1), spec)
    assert np.allclose(d.conj().T @ d, np.eye(64), atol=1e-10)


def test_displacement_truncation_rule():
    with pytest.raises(TruncationError):
        displacement_operator(CoherentAmp(6.0), HilbertSpec(fock_dim=128))


def test_squeeze_truncation_rule():
    with pytest.raises(TruncationError):
        squeeze_operator(SqueezeParam(1.0), HilbertSpec(fock_dim=128))


def test_non_strict_operators_skip_the_rule():
    op = displacement_operator(CoherentAmp(6.0), HilbertSpec(fock_dim=40), strict=False)
    assert op.shape == (40, 40)


def test_mode_operator_applies_to_both_spin_blocks(small_space):
    a, a_dag, _ = build_mode_operators(small_space)
    up = make_initial_state("up", 0, small_space)
    raised = apply_operator(a_dag, up)
    assert raised.amplitudes[small_space.fock_dim + 1] == pytest.approx(1.0)


# ---------------------------------------------------------------------------
# Thermal occupation
# ---------------------------------------------------------------------------

def test_thermal_weights_normalised_with_correct_mean():
    levels, weights = thermal_weights(0.15, 128)
    assert weights.sum() == pytest.approx(1.0)
    assert float(levels @ weights) == pytest.approx(0.15, abs=1e-4)


def test_thermal_weights_ground_state_at_zero_temperature():
    levels, weights = thermal_weights(0.0, 128)
    assert list(levels) == [0]
    assert list(weights) == [1.0]


def test_thermal_sample_mean_and_determinism():
    draws = thermal_sample(0.15, 42, size=20_000)
    assert draws.min() >= 0
    assert draws.mean() == pytest.approx(0.15, abs=0.02)
    assert np.array_equal(draws, thermal_sample(0.15, 42, size=20_000))


def test_thermal_sample_scalar():
    assert isinstance(thermal_sample(0.15, 1), int)


# ---------------------------------------------------------------------------
# Truncation checks
# ---------------------------------------------------------------------------

def test_check_truncation_passes_for_compact_state():
    report = check_truncation(coherent_state(CoherentAmp(3.0), HilbertSpec(fock_dim=128)))
    assert report.passed
    assert report.levels_checked == 7


def test_check_truncation_flags_edge_population():
    spec = HilbertSpec(fock_dim=40)
    state = make_initial_state("down", 39, spec)
    report = check_truncation(state)
    assert not report.passed
    assert report.tail_population == pytest.approx(1.0)


# ---------------------------------------------------------------------------
# Units and Lamb-Dicke parameter
# ---------------------------------------------------------------------------

def test_zero_point_scales_for_default_ion():
    units = UnitScale.from_mode(ModeParams(freq=MODE_FREQ), mass_amu=25.0)
    assert units.x_zpf * 1e9 == pytest.approx(12.47, abs=0.01)
    assert units.p_zpf * 1e27 == pytest.approx(4.228, abs=0.005)


def test_lamb_dicke_from_geometry():
    units = UnitScale.from_mode(ModeParams(freq=MODE_FREQ))
    eta = derive_lamb_dicke(units.mass, MODE_FREQ, 140e-9, 0.840)
    assert 0.35 <= eta <= 0.42


def test_lamb_dicke_vanishes_perpendicular():
    units = UnitScale.from_mode(ModeParams(freq=MODE_FREQ))
    assert derive_lamb_dicke(units.mass, MODE_FREQ, 140e-9, math.pi / 2) == 0.0


def test_lamb_dicke_rejects_bad_inputs():
    with pytest.raises(ValueError):
        derive_lamb_dicke(0.0, MODE_FREQ, 140e-9, 0.0)
    with pytest.raises(ValueError):
        derive_lamb_dicke(1e-26, MODE_FREQ, 140e-9, 2.0)
