import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from nvfield.constants import TWO_PI, V_PER_UM
from nvfield.dsl import builtin
from nvfield.open_system import (NoiseModel, StepSizeError, dephasing_operators, evolve_lindblad,
                                 fid_with_dephasing, hahn_ensemble, hahn_tau_grid, lindblad_step,
                                 liouvillian, sample_field_trajectory, t2_components)
from nvfield.pulse_engine import execute, hahn_closed
from nvfield.spin import DriveSettings, NVFrequencies, build_h0, field_to_frequencies

DRIVE = DriveSettings(TWO_PI * 10e6)


def _random_rho(rng):
    a = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def test_liouvillian_matches_commutator(rng):
    f = NVFrequencies(1e6, 2e6, 3e5, 4e6, 0.4)
    H = build_h0(f)
    L = dephasing_operators(2e-6)
    rho = _random_rho(rng)
    direct = -1j * (H @ rho - rho @ H)
    for c in L:
        direct += c @ rho @ c.conj().T - 0.5 * (c.conj().T @ c @ rho + rho @ c.conj().T @ c)
    assert np.allclose(liouvillian(H, L) @ rho.reshape(-1), direct.reshape(-1))


def test_evolve_matches_exact_superoperator(rng):
    H = build_h0(NVFrequencies(0, 1e6, 2e5, 3e6, 1.0))
    L = dephasing_operators(1e-6)
    rho = _random_rho(rng)
    exact = (expm(liouvillian(H, L) * 2e-6) @ rho.reshape(-1)).reshape(3, 3)
    assert np.allclose(evolve_lindblad(rho, H, L, 2e-6), exact, atol=1e-7)


@settings(max_examples=25)
@given(st.integers(0, 2 ** 32 - 1), st.floats(1e-7, 1e-4), st.floats(0, 5e-6))
def test_density_matrix_stays_physical(seed, t2, t):
    rng = np.random.default_rng(seed)
    bz, xz, xp = rng.normal(size=3) * 1e6
    H = build_h0(NVFrequencies(0.0, bz, xz, abs(xp), rng.uniform(0, TWO_PI)))
    rho = _random_rho(rng)
    out = evolve_lindblad(rho, H, dephasing_operators(t2), t)
    assert abs(np.trace(out) - 1) < 1e-8
    assert np.allclose(out, out.conj().T, atol=1e-10)
    assert np.linalg.eigvalsh((out + out.conj().T) / 2).min() > -1e-8


def test_coherence_decay_rates():
    t2 = 3e-6
    rho = np.full((3, 3), 1 / 3, dtype=complex)
    out = evolve_lindblad(rho, np.zeros((3, 3)), dephasing_operators(t2), 2e-6)
    assert out[0, 1].real == pytest.approx(np.exp(-2e-6 / (2 * t2)) / 3, rel=1e-7)
    assert out[0, 2].real == pytest.approx(np.exp(-2 * 2e-6 / t2) / 3, rel=1e-7)
    assert np.allclose(np.diag(out), 1 / 3)


def test_lindblad_step_rejects_large_dt():
    H = build_h0(NVFrequencies(xi_perp=TWO_PI * 1e6))
    rho = np.diag([0, 1, 0]).astype(complex)
    with pytest.raises(StepSizeError):
        lindblad_step(rho, H, [], 1e-6)
    out = lindblad_step(rho, H, [], 1e-10)
    assert abs(np.trace(out) - 1) < 1e-12


def test_no_dephasing_reduces_to_unitary():
    f = field_to_frequencies([3 * V_PER_UM, 4 * V_PER_UM, 10 * V_PER_UM])
    taus = np.linspace(0, 2e-6, 41)
    for name in ("fid_xi_perp", "fid_phi_e", "fid_xi_z", "hahn"):
        dens = fid_with_dephasing(builtin(name), f, DRIVE, NoiseModel(t2_star=None), taus)
        unit = execute(builtin(name), f, DRIVE, taus)
        assert np.allclose(dens.signal, unit.signal, atol=1e-7)


def test_fid_dephasing_decays_to_half():
    f = field_to_frequencies([1 * V_PER_UM, 0, 0])
    taus = np.array([0.0, 20e-6, 30e-6])
    trace = fid_with_dephasing(builtin("fid_xi_perp"), f, DRIVE, NoiseModel(t2_star=1e-6), taus)
    assert trace.signal[0] == pytest.approx(1.0)
    assert np.allclose(trace.signal[1:], 0.5, atol=1e-6)


def test_fluctuating_fid_is_deterministic_and_reports_stderr():
    noise = NoiseModel(t2_star=5e-6, field_mean=1e6, field_std=0.3e6, resample_dt=50e-9,
                       trajectories=20, seed=7)
    taus = np.linspace(0, 1e-6, 11)
    a = fid_with_dephasing(builtin("fid_xi_perp"), NVFrequencies(), DRIVE, noise, taus)
    b = fid_with_dephasing(builtin("fid_xi_perp"), NVFrequencies(), DRIVE, noise, taus)
    assert np.array_equal(a.signal, b.signal)
    assert a.stderr is not None and a.stderr[0] == pytest.approx(0.0, abs=1e-12)
    assert np.all(a.stderr[1:] > 0)


def test_fluctuating_fid_rejects_two_free_steps():
    noise = NoiseModel(field_std=1e5, trajectories=2)
    with pytest.raises(NotImplementedError):
        fid_with_dephasing(builtin("hahn"), NVFrequencies(), DRIVE, noise, [0.0, 1e-7])


def test_field_trajectory_statistics():
    noise = NoiseModel(field_mean=[1e6, 0, -2e6], field_std=0.5e6, resample_dt=10e-9, seed=3)
    tr = sample_field_trajectory(noise, 200e-6)
    assert tr.values.shape == (20000, 3)
    assert np.allclose(tr.values.mean(axis=0), [1e6, 0, -2e6], atol=0.02e6)
    assert np.allclose(tr.values.std(axis=0), 0.5e6, rtol=0.02)
    again = sample_field_trajectory(noise, 200e-6)
    assert np.array_equal(tr.values, again.values)
    other = sample_field_trajectory(noise, 200e-6, index=1)
    assert not np.array_equal(tr.values, other.values)
    assert np.array_equal(tr.at([0.0, 15e-9]), tr.values[[0, 1]])


def test_hahn_static_field_matches_closed_form():
    noise = NoiseModel(field_mean=[1e6, 0.5e6, 0.2e6], field_std=0.0, t2_int=None, trajectories=100)
    taus = np.linspace(0, 2e-6, 57)
    trace = hahn_ensemble(noise, DRIVE, taus)
    xi = TWO_PI * 0.17 * math.hypot(1e6, 0.5e6)
    assert np.allclose(trace.signal, hahn_closed(taus, xi), atol=1e-12)


def test_hahn_intrinsic_envelope():
    noise = NoiseModel(field_mean=0.0, t2_int=10e-6, trajectories=100)
    trace = hahn_ensemble(noise, DRIVE, [0.0, 10e-6])
    # with no field the flip probability is zero and relaxes towards 1/2
    p = 0.5 - 0.5 * math.exp(-1)
    assert trace.signal[1] == pytest.approx(p * p)


def test_hahn_independent_of_chunking():
    noise = NoiseModel(field_mean=1e6, field_std=0.75e6, trajectories=100, seed=11, resample_dt=20e-9)
    taus = np.arange(0, 41) * 100e-9
    a = hahn_ensemble(noise, DRIVE, taus, chunk=100, block=4096)
    b = hahn_ensemble(noise, DRIVE, taus, chunk=7, block=13)
    assert np.array_equal(a.signal, b.signal)


def test_hahn_warns_on_few_trajectories():
    with pytest.warns(UserWarning):
        hahn_ensemble(NoiseModel(trajectories=10), DRIVE, [0.0, 1e-7])


def test_hahn_tau_grid_on_resample_multiples():
    noise = NoiseModel(field_mean=1e6, resample_dt=10e-9)
    grid = hahn_tau_grid(noise, 150e-6)
    steps = grid / noise.resample_dt
    assert np.allclose(steps, np.round(steps))
    assert grid[-1] <= 150e-6
    assert np.diff(grid)[0] <= 1 / (8 * 4 * 0.17 * math.sqrt(2) * 1e6) + 10e-9


@given(st.floats(1e-6, 99e-6))
def test_t2_components_inverse(t2_e):
    t2_int = 100e-6
    total = 1 / (1 / t2_e + 1 / t2_int)
    assert t2_components(total, t2_int) == pytest.approx(t2_e, rel=1e-9)


def test_t2_components_edge():
    assert t2_components(120e-6, 100e-6) == math.inf
    with pytest.raises(ValueError):
        t2_components(0.0, 1.0)


def test_noise_model_validation():
    with pytest.raises(ValueError):
        NoiseModel(t2_star=0.0)
    with pytest.raises(ValueError):
        NoiseModel(field_std=-1)
    with pytest.raises(ValueError):
        NoiseModel(field_mean=[1, 2])
    assert np.array_equal(NoiseModel(field_mean=2.0).mean_vector, [2.0, 2.0, 2.0])
