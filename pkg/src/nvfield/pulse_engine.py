"""Execute parsed pulse sequences and evaluate the analytic FID/Hahn signals."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .dsl import Free, PulseSequence, Pulse, builtin, parse_sequence
from .spin import (MINUS, PLUS, ZERO, DriveSettings, NVFrequencies, drive_propagator,
                   free_propagator, full_pulse_propagator, rotation_time)

LEVEL_INDEX = {1: PLUS, 0: ZERO, -1: MINUS}


class InconsistentTraceError(ValueError):
    pass


@dataclass
class SignalTrace:
    tau: np.ndarray
    signal: np.ndarray
    stderr: Optional[np.ndarray] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.tau = np.asarray(self.tau, dtype=float)
        self.signal = np.asarray(self.signal, dtype=float)
        if self.tau.shape != self.signal.shape or self.tau.ndim != 1:
            raise ValueError("tau and signal must be 1-D arrays of equal length")
        if self.stderr is not None:
            self.stderr = np.asarray(self.stderr, dtype=float)
            if self.stderr.shape != self.signal.shape:
                raise ValueError("stderr must match signal shape")
        if np.any(self.signal < -1e-9) or np.any(self.signal > 1 + 1e-9):
            raise ValueError("signal populations must lie in [0, 1]")
        self.signal = np.clip(self.signal, 0.0, 1.0)

    def __len__(self):
        return self.tau.size

    def sample_at(self, tau: float, rtol: float = 1e-9) -> float:
        """Signal value at an exactly sampled ``tau`` (no interpolation)."""
        scale = max(abs(tau), float(np.max(np.abs(self.tau))) if self.tau.size else 0.0, 1e-300)
        hits = np.flatnonzero(np.abs(self.tau - tau) <= rtol * scale)
        if hits.size == 0:
            raise InconsistentTraceError(f"trace is not sampled at tau={tau:.6g} s")
        return float(self.signal[hits[0]])


def _pulse_matrix(step: Pulse, f: NVFrequencies, d: DriveSettings, hard_pulse: bool) -> np.ndarray:
    drive = DriveSettings.polarized(d.omega, step.polarization)
    t = rotation_time(drive, step.angle)
    if hard_pulse:
        return drive_propagator(drive, t)
    return full_pulse_propagator(f, drive, t)


def execute(seq: PulseSequence, f: NVFrequencies, d: DriveSettings, taus,
            hard_pulse: bool = True) -> SignalTrace:
    """Run ``seq`` from ``|0>`` for every ``tau`` and return the read-level population.

    Pulse polarizations come from the sequence; only ``d.omega`` is used.
    ``hard_pulse=False`` includes ``H0`` during pulses.
    """
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    if np.any(taus < 0):
        raise ValueError("tau values must be >= 0")
    psi = np.zeros((taus.size, 3), dtype=complex)
    psi[:, ZERO] = 1.0
    for step in seq.body:
        if isinstance(step, Pulse):
            psi = psi @ _pulse_matrix(step, f, d, hard_pulse).T
        elif isinstance(step, Free):
            if step.symbolic:
                psi = np.einsum("nij,nj->ni", free_propagator(f, taus), psi)
            else:
                psi = psi @ free_propagator(f, step.duration).T
    signal = np.abs(psi[:, LEVEL_INDEX[seq.read_level]]) ** 2
    meta = {"sequence": seq.name, "omega": d.omega, "hard_pulse": hard_pulse,
            "frequencies": asdict(f)}
    return SignalTrace(taus, signal, metadata=meta)


def fid_xi_perp_closed(tau, beta_z, xi_perp):
    tau = np.asarray(tau, dtype=float)
    x = math.hypot(beta_z, xi_perp)
    if x == 0:
        return np.ones_like(tau)
    s2 = np.sin(tau * x) ** 2
    return np.cos(tau * x) ** 2 + (beta_z / x) ** 2 * s2


def fid_phi_e_closed(tau, xi_perp, phi_e):
    tau = np.asarray(tau, dtype=float)
    return 0.5 * (1 - np.sin(2 * tau * xi_perp) * math.sin(phi_e))


def fid_xi_z_closed(tau, xi_perp, xi_z):
    """FID sensitive to the axial shift; valid only for a resonant drive (delta = 0)."""
    tau = np.asarray(tau, dtype=float)
    cp = np.cos(tau * xi_perp)
    return 0.25 * (1 - 2 * cp * np.cos(tau * xi_z) + cp ** 2)


def hahn_closed(tau, xi_perp):
    tau = np.asarray(tau, dtype=float)
    return 0.25 * (1 - np.cos(2 * tau * xi_perp)) ** 2


def phi_e_probe_time(xi_perp: float) -> float:
    """Free-evolution time where ``2 tau xi_perp = pi/2``."""
    if xi_perp <= 0:
        raise ValueError("xi_perp must be > 0")
    return math.pi / (4 * xi_perp)


def extract_phi_e(trace: SignalTrace, xi_perp: float) -> float:
    """Azimuth of the transverse field from the ratio ``FID(pi/(4 xi))/FID(0)``.

    Returns the principal value in ``[-pi/2, pi/2]``; ``phi`` and ``pi - phi``
    give identical traces.
    """
    s0 = trace.sample_at(0.0)
    sq = trace.sample_at(phi_e_probe_time(xi_perp))
    if s0 <= 0:
        raise InconsistentTraceError("FID(0) must be positive")
    ratio = sq / s0
    if not -1e-9 <= ratio <= 2 + 1e-9:
        raise InconsistentTraceError(f"signal ratio {ratio:.6g} outside [0, 2]")
    return math.asin(min(1.0, max(-1.0, 1.0 - ratio)))


def default_tau_grid(freq_hz: float, periods: float = 8.0, n: int = 1024) -> np.ndarray:
    """Uniform sweep covering ``periods`` periods of the slowest expected frequency."""
    if freq_hz <= 0:
        raise ValueError("frequency must be > 0")
    return np.linspace(0.0, periods / freq_hz, n)


__all__ = [
    "SignalTrace", "InconsistentTraceError", "execute", "fid_xi_perp_closed",
    "fid_phi_e_closed", "fid_xi_z_closed", "hahn_closed", "extract_phi_e",
    "phi_e_probe_time", "default_tau_grid", "builtin", "parse_sequence",
]
