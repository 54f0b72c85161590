import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nvfield.constants import TWO_PI, V_PER_UM
from nvfield.dsl import builtin
from nvfield.pulse_engine import SignalTrace, execute, fid_xi_perp_closed
from nvfield.spectral import (FitResult, Spectrum, find_peaks, fit_alpha, fit_fid_frequency,
                              fit_hahn_decay, hahn_model, parseval_ratio, resolvable, spectrum)
from nvfield.spin import DriveSettings, field_to_frequencies

DRIVE = DriveSettings(TWO_PI * 10e6)


def _cos_trace(freqs, amps, n=2048, dt=5e-9, offset=0.5):
    t = np.arange(n) * dt
    y = offset + sum(a * np.cos(TWO_PI * f * t) for f, a in zip(freqs, amps))
    return SignalTrace(t, y)


def test_spectrum_axes():
    trace = _cos_trace([1e6], [0.2], n=1000, dt=1e-8)
    s = spectrum(trace, pad=4)
    assert s.bin_width == pytest.approx(1 / (4000 * 1e-8))
    assert s.resolution == pytest.approx(1 / (999 * 1e-8))
    assert s.freqs[-1] == pytest.approx(0.5 / 1e-8)


@settings(max_examples=30)
@given(st.floats(0.5e6, 20e6), st.floats(0.01, 0.4), st.sampled_from([1, 2, 8]))
def test_single_tone_peak_within_one_bin(freq, amp, pad):
    trace = _cos_trace([freq], [amp])
    s = spectrum(trace, pad=pad, window="hann")
    peaks = find_peaks(s)
    best = max(peaks, key=lambda p: p.amplitude)
    assert abs(best.freq - freq) <= s.bin_width


@given(st.lists(st.floats(-1, 1), min_size=8, max_size=200))
def test_parseval(values):
    y = np.asarray(values)
    if np.ptp(y) > 1e-6:
        assert parseval_ratio(y) == pytest.approx(1.0, rel=1e-9)


def test_padding_does_not_change_peak_height_much():
    # on-bin tone, so the unpadded spectrum has no scalloping loss
    trace = _cos_trace([12 / (1024 * 1e-8)], [0.2], n=1024, dt=1e-8)
    p1 = max(find_peaks(spectrum(trace, pad=1)), key=lambda p: p.amplitude)
    p8 = max(find_peaks(spectrum(trace, pad=8)), key=lambda p: p.amplitude)
    assert p8.amplitude == pytest.approx(p1.amplitude, rel=0.05)


def test_spectrum_input_checks():
    with pytest.raises(ValueError):
        spectrum(SignalTrace(np.arange(5) * 1e-9, np.full(5, 0.5)))
    with pytest.raises(ValueError):
        spectrum(SignalTrace(np.r_[0, np.cumsum(np.linspace(1, 2, 9))] * 1e-9, np.full(10, 0.5)))
    with pytest.raises(ValueError):
        spectrum(_cos_trace([1e6], [0.1]), window="kaiser")


def test_flat_trace_has_no_peaks():
    assert find_peaks(spectrum(SignalTrace(np.arange(64) * 1e-8, np.full(64, 0.7)))) == []


def test_resolvable_two_tones():
    near = _cos_trace([1.0e6, 1.05e6], [0.2, 0.2], n=4096, dt=1e-8)
    assert resolvable(spectrum(near, pad=4), 1.0e6, 1.05e6)
    short = _cos_trace([1.0e6, 1.05e6], [0.2, 0.2], n=1000, dt=1e-8)
    assert not resolvable(spectrum(short, pad=4), 1.0e6, 1.05e6)
    with pytest.raises(ValueError):
        resolvable(spectrum(near), 1e6, 1e6)


def test_fid_xi_z_spectrum_has_three_lines():
    f = field_to_frequencies([10 * V_PER_UM] * 3)
    taus = np.arange(20000) * 10e-9
    s = spectrum(execute(builtin("fid_xi_z"), f, DRIVE, taus), pad=4)
    lo = (f.xi_perp - f.xi_z) / TWO_PI
    hi = (f.xi_perp + f.xi_z) / TWO_PI
    peaks = find_peaks(s)
    freqs = sorted(p.freq for p in peaks)
    assert len(freqs) == 3
    assert np.allclose(freqs, [lo, hi, 2 * f.xi_perp / TWO_PI], atol=s.bin_width)
    assert resolvable(s, lo, hi)


def test_hahn_fit_noiseless():
    taus = np.linspace(0, 100e-6, 4000)
    xi, t2 = TWO_PI * 0.3e6, 30e-6
    trace = SignalTrace(taus, hahn_model(taus, xi, t2))
    fit = fit_hahn_decay(trace)
    assert fit.converged
    assert fit.params["xi_perp"] == pytest.approx(xi, rel=1e-9)
    assert fit.params["T2"] == pytest.approx(t2, rel=1e-9)
    assert fit.diagnostics["flags"] == []


def test_hahn_fit_flags_short_trace():
    taus = np.linspace(0, 20e-6, 800)
    trace = SignalTrace(taus, hahn_model(taus, TWO_PI * 0.3e6, 30e-6))
    fit = fit_hahn_decay(trace)
    assert fit.converged
    assert fit.diagnostics["flags"]


@settings(max_examples=20)
@given(st.floats(0.2e6, 1e6), st.floats(10e-6, 60e-6), st.integers(0, 2 ** 31))
def test_hahn_fit_with_noise(f_hz, t2, seed):
    rng = np.random.default_rng(seed)
    taus = np.linspace(0, 150e-6, 3000)
    y = hahn_model(taus, TWO_PI * f_hz, t2) + rng.normal(0, 0.005, taus.size)
    fit = fit_hahn_decay(SignalTrace(taus, np.clip(y, 0, 1)))
    assert fit.converged
    assert fit.params["T2"] == pytest.approx(t2, rel=0.05)
    assert abs(fit.params["T2"] - t2) < 6 * fit.stderr["T2"] + 1e-9


def test_fid_frequency_fit():
    f = field_to_frequencies([1.5 * V_PER_UM, 0, 0])
    taus = np.linspace(0, 10e-6, 2001)
    fit = fit_fid_frequency(execute(builtin("fid_xi_perp"), f, DRIVE, taus))
    assert fit.converged
    assert fit.params["x"] == pytest.approx(f.xi_perp, rel=1e-9)


def test_fid_frequency_no_signal():
    trace = SignalTrace(np.linspace(0, 1e-6, 64), np.ones(64))
    fit = fit_fid_frequency(trace)
    assert not fit.converged and math.isnan(fit.params["x"])


def test_fit_alpha_exact():
    e_m = np.repeat([1e6, 2e6, 4e6], 4)
    sig = np.tile([0.5e6, 0.75e6, 1e6, 1.25e6], 3)
    alpha = 3.0e7
    pts = np.column_stack([e_m, sig, alpha * e_m / sig ** 2])
    fit = fit_alpha(pts)
    assert fit.params["alpha"] == pytest.approx(alpha, rel=1e-12)
    assert fit.diagnostics["r2"] == pytest.approx(1.0)
    assert fit.stderr["alpha"] == pytest.approx(0.0, abs=1e-3)


def test_fit_alpha_rejects_bad_input():
    with pytest.raises(ValueError):
        fit_alpha([[1, 1, 1], [1, 1, 1]])
    with pytest.raises(ValueError):
        fit_alpha([[1, 0, 1], [1, 1, 1], [1, 1, 1]])
    with pytest.raises(ValueError):
        fit_alpha([[0, 1, 1], [0, 1, 1], [0, 1, 1]])


def test_fit_result_invariants():
    with pytest.raises(ValueError):
        FitResult({"a": 1.0}, {"a": -1.0}, 0.0, True)
    with pytest.raises(ValueError):
        FitResult({"a": 1.0}, {"a": 1.0}, math.nan, True)
    assert FitResult({"a": 1.0}, {"a": 0.1}, 0.0, True).to_json()["converged"] is True


def test_spectrum_validation():
    with pytest.raises(ValueError):
        Spectrum(np.array([0.0, 0.0]), np.array([1.0, 1.0]), 1.0, 1.0, 2)
    with pytest.raises(ValueError):
        Spectrum(np.array([0.0, 1.0]), np.array([1.0, -1.0]), 1.0, 1.0, 2)


def test_fid_closed_form_spectrum_line():
    taus = np.arange(4096) * 5e-9
    xi = TWO_PI * 1e6
    s = spectrum(SignalTrace(taus, fid_xi_perp_closed(taus, 0.0, xi)), pad=4)
    best = max(find_peaks(s), key=lambda p: p.amplitude)
    assert best.freq == pytest.approx(2e6, abs=s.bin_width)
