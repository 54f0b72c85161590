import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nvfield.constants import TWO_PI, V_PER_UM
from nvfield.dsl import builtin, parse_sequence
from nvfield.pulse_engine import (InconsistentTraceError, SignalTrace, default_tau_grid, execute,
                                  extract_phi_e, fid_phi_e_closed, fid_xi_perp_closed,
                                  fid_xi_z_closed, hahn_closed, phi_e_probe_time)
from nvfield.spin import DriveSettings, NVFrequencies, field_to_frequencies

DRIVE = DriveSettings(TWO_PI * 10e6)
taus = np.linspace(0, 3e-6, 97)
mhz = st.floats(0, TWO_PI * 3e6)
angle = st.floats(0, TWO_PI)


@given(mhz, st.floats(-TWO_PI * 3e6, TWO_PI * 3e6), st.floats(-TWO_PI * 1e5, TWO_PI * 1e5), angle)
def test_fid_xi_perp_matches_closed_form(xi_perp, beta_z, xi_z, phi):
    f = NVFrequencies(0.0, beta_z, xi_z, xi_perp, phi)
    trace = execute(builtin("fid_xi_perp"), f, DRIVE, taus)
    assert np.allclose(trace.signal, fid_xi_perp_closed(taus, beta_z, xi_perp), atol=1e-9)


@given(mhz, angle, st.floats(-TWO_PI * 1e5, TWO_PI * 1e5))
def test_fid_phi_e_matches_closed_form(xi_perp, phi, xi_z):
    f = NVFrequencies(0.0, 0.0, xi_z, xi_perp, phi)
    trace = execute(builtin("fid_phi_e"), f, DRIVE, taus)
    assert np.allclose(trace.signal, fid_phi_e_closed(taus, xi_perp, phi), atol=1e-9)


@given(mhz, st.floats(-TWO_PI * 1e6, TWO_PI * 1e6), angle)
def test_fid_xi_z_matches_closed_form(xi_perp, xi_z, phi):
    f = NVFrequencies(0.0, 0.0, xi_z, xi_perp, phi)
    trace = execute(builtin("fid_xi_z"), f, DRIVE, taus)
    assert np.allclose(trace.signal, fid_xi_z_closed(taus, xi_perp, xi_z), atol=1e-9)


@given(mhz, st.floats(-TWO_PI * 1e6, TWO_PI * 1e6), angle)
def test_hahn_matches_closed_form(xi_perp, xi_z, phi):
    f = NVFrequencies(0.0, 0.0, xi_z, xi_perp, phi)
    trace = execute(builtin("hahn"), f, DRIVE, taus)
    assert np.allclose(trace.signal, hahn_closed(taus, xi_perp), atol=1e-9)


@given(mhz, angle, st.floats(-TWO_PI * 1e6, TWO_PI * 1e6), st.floats(-TWO_PI * 3e6, TWO_PI * 3e6))
def test_populations_sum_to_one(xi_perp, phi, xi_z, beta_z):
    f = NVFrequencies(0.0, beta_z, xi_z, xi_perp, phi)
    body = "init; pulse linear pi/2; free tau; pulse minus 1.1 rad; free 50 ns; pulse plus pi/2; read p{}"
    total = sum(execute(parse_sequence(body.format(level)), f, DRIVE, taus).signal
                for level in ("+1", "0", "-1"))
    assert np.allclose(total, 1.0, atol=1e-12)


def test_signals_at_zero_tau():
    f = field_to_frequencies([3 * V_PER_UM, 4 * V_PER_UM, 10 * V_PER_UM])
    expected = {"fid_xi_perp": 1.0, "fid_phi_e": 0.5, "fid_xi_z": 0.0, "hahn": 0.0}
    for name, value in expected.items():
        assert execute(builtin(name), f, DRIVE, [0.0]).signal[0] == pytest.approx(value, abs=1e-12)


def test_zero_field_leaves_fid_flat():
    trace = execute(builtin("fid_xi_perp"), NVFrequencies(), DRIVE, taus)
    assert np.allclose(trace.signal, 1.0)


def test_soft_pulses_approach_hard_pulses_for_strong_drive():
    f = field_to_frequencies([1 * V_PER_UM, 0, 0])

    def gap(omega):
        d = DriveSettings(TWO_PI * omega)
        soft = execute(builtin("fid_xi_perp"), f, d, taus, hard_pulse=False)
        return np.max(np.abs(soft.signal - execute(builtin("fid_xi_perp"), f, d, taus).signal))

    # the finite-pulse error is first order in xi_perp / omega
    assert gap(1e9) < 3 * f.xi_perp / (TWO_PI * 1e9)
    assert gap(1e9) < gap(1e8) / 5


def test_negative_tau_rejected():
    with pytest.raises(ValueError):
        execute(builtin("hahn"), NVFrequencies(), DRIVE, [-1e-9])


def test_signal_trace_validation():
    with pytest.raises(ValueError):
        SignalTrace([0, 1], [0.5])
    with pytest.raises(ValueError):
        SignalTrace([0, 1], [0.5, 1.5])
    trace = SignalTrace([0.0, 1e-6], [1.0, 0.4])
    assert trace.sample_at(1e-6) == 0.4
    with pytest.raises(InconsistentTraceError):
        trace.sample_at(2e-6)


@given(st.floats(TWO_PI * 1e4, TWO_PI * 3e6), st.floats(-math.pi / 2, math.pi / 2))
def test_phi_e_extraction_recovers_principal_value(xi_perp, phi):
    f = NVFrequencies(xi_perp=xi_perp, phi_e=phi % TWO_PI)
    probe = [0.0, phi_e_probe_time(xi_perp)]
    trace = execute(builtin("fid_phi_e"), f, DRIVE, probe)
    assert extract_phi_e(trace, xi_perp) == pytest.approx(phi, abs=1e-7)


def test_phi_e_ambiguity_pi_minus_phi():
    xi = TWO_PI * 1e6
    probe = [0.0, phi_e_probe_time(xi)]
    a = execute(builtin("fid_phi_e"), NVFrequencies(xi_perp=xi, phi_e=0.3), DRIVE, probe)
    b = execute(builtin("fid_phi_e"), NVFrequencies(xi_perp=xi, phi_e=math.pi - 0.3), DRIVE, probe)
    assert np.allclose(a.signal, b.signal)


def test_phi_e_extraction_needs_probe_sample():
    trace = SignalTrace([0.0, 1e-7], [0.5, 0.5])
    with pytest.raises(InconsistentTraceError):
        extract_phi_e(trace, TWO_PI * 1e6)


def test_default_tau_grid():
    grid = default_tau_grid(1e6, periods=4, n=11)
    assert grid[0] == 0 and grid[-1] == pytest.approx(4e-6)
    with pytest.raises(ValueError):
        default_tau_grid(0.0)


@given(st.floats(TWO_PI * 1e5, TWO_PI * 3e6), st.floats(-TWO_PI * 3e6, TWO_PI * 3e6),
       st.floats(0, 2e-6))
def test_fid_xi_perp_period(xi_perp, beta_z, t):
    x = math.hypot(beta_z, xi_perp)
    f = NVFrequencies(beta_z=beta_z, xi_perp=xi_perp)
    trace = execute(builtin("fid_xi_perp"), f, DRIVE, [t, t + math.pi / x])
    assert trace.signal[0] == pytest.approx(trace.signal[1], abs=1e-9)
    assert 0 <= trace.signal.min() and trace.signal.max() <= 1


@given(st.floats(TWO_PI * 1e5, TWO_PI * 3e6), st.floats(TWO_PI * 1e3, TWO_PI * 3e6))
def test_full_contrast_only_without_magnetic_field(xi_perp, beta_z):
    for bz, full in ((0.0, True), (beta_z, False)):
        x = math.hypot(bz, xi_perp)
        tau = math.pi / (2 * x)  # minimum of cos^2
        s = execute(builtin("fid_xi_perp"), NVFrequencies(beta_z=bz, xi_perp=xi_perp), DRIVE, [tau]).signal[0]
        assert (s < 1e-12) == full
