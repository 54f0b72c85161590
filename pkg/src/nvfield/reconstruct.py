"""Three-sequence protocol recovering the mean electric-field vector.

1. ``fid_xi_perp`` at zero axial magnetic field gives ``xi_perp`` from its
   oscillation frequency.
2. ``fid_phi_e`` sampled at ``tau = 0`` and ``pi/(4 xi_perp)`` gives the
   azimuth through :func:`extract_phi_e`.
3. ``fid_xi_z`` driven on resonance shows lines at ``xi_perp +/- xi_z``;
   their splitting gives ``xi_z`` when it can be resolved.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .constants import DEFAULT_CONSTANTS, NVConstants, TWO_PI
from .dsl import builtin
from .open_system import NoiseModel, fid_with_dephasing
from .pulse_engine import (InconsistentTraceError, SignalTrace, execute, extract_phi_e,
                           phi_e_probe_time)
from .spectral import find_peaks, fit_fid_frequency, least_squares_fit, resolvable, spectrum
from .spin import DriveSettings, NVFrequencies, field_to_frequencies, frequencies_to_field


@dataclass(frozen=True)
class ProtocolSettings:
    """Acquisition grids; fixed in advance, independent of the hidden field."""

    omega: float = TWO_PI * 10e6
    fid_tau_max: float = 20e-6
    fid_points: int = 4096
    xi_z_tau_max: float = 200e-6
    xi_z_dt: float = 20e-9
    t2_star: Optional[float] = None

    def fid_grid(self) -> np.ndarray:
        return np.linspace(0.0, self.fid_tau_max, self.fid_points)

    def xi_z_grid(self) -> np.ndarray:
        n = int(round(self.xi_z_tau_max / self.xi_z_dt))
        return np.arange(n + 1) * self.xi_z_dt


@dataclass
class ProtocolTraces:
    fid_xi_perp: SignalTrace
    fid_phi_e: SignalTrace
    fid_xi_z: SignalTrace


@dataclass
class ReconstructionResult:
    """Recovered frequencies (rad/s) and field components (V/m).

    ``E_z`` is a magnitude: the axial sign does not enter any of the signals.
    ``phi_e`` is the principal value; ``pi - phi_e`` fits the data equally.
    """

    xi_perp: float
    xi_z: float
    phi_e: float
    E_perp: float
    E_x: float
    E_y: float
    E_z: float
    xi_z_resolved: bool = True
    xi_z_bound: float = math.nan
    phi_e_defined: bool = True
    phi_e_ambiguous: bool = True
    diagnostics: dict = field(default_factory=dict)

    @property
    def field(self) -> np.ndarray:
        return np.array([self.E_x, self.E_y, self.E_z])

    def to_json(self) -> dict:
        keys = ("xi_perp", "xi_z", "phi_e", "E_perp", "E_x", "E_y", "E_z", "xi_z_resolved",
                "xi_z_bound", "phi_e_defined", "phi_e_ambiguous")
        out = {k: getattr(self, k) for k in keys}
        out = {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in out.items()}
        out["diagnostics"] = self.diagnostics
        return out


def _run(name, f, d, taus, settings):
    seq = builtin(name)
    if settings.t2_star is None:
        return execute(seq, f, d, taus)
    return fid_with_dephasing(seq, f, d, NoiseModel(t2_star=settings.t2_star), taus)


def run_protocol(E, settings: ProtocolSettings = ProtocolSettings(),
                 constants: NVConstants = DEFAULT_CONSTANTS) -> ReconstructionResult:
    """Simulate the three measurements for field ``E`` (V/m) and reconstruct it."""
    f = field_to_frequencies(E, B_z=0.0, constants=constants)
    d = DriveSettings(settings.omega)
    tr_perp = _run("fid_xi_perp", f, d, settings.fid_grid(), settings)
    fit = fit_fid_frequency(tr_perp)
    taus_phi = [0.0]
    if fit.converged and fit.params["x"] > 0:
        taus_phi.append(phi_e_probe_time(abs(fit.params["x"])))
    tr_phi = _run("fid_phi_e", f, d, np.array(taus_phi), settings)
    tr_z = _run("fid_xi_z", f, d, settings.xi_z_grid(), settings)
    return reconstruct_field(ProtocolTraces(tr_perp, tr_phi, tr_z), constants)


# -------------------------------------------------------------- xi_z line fit

def _xi_z_model(tau, a, b, c, xp, xz, g1, g2):
    return (a + b * np.cos(xp * tau) * np.cos(xz * tau) * np.exp(-g1 * tau)
            + c * np.cos(2 * xp * tau) * np.exp(-g2 * tau))


def _xi_z_jac(tau, a, b, c, xp, xz, g1, g2):
    cp, sp = np.cos(xp * tau), np.sin(xp * tau)
    cz, sz = np.cos(xz * tau), np.sin(xz * tau)
    c2, s2 = np.cos(2 * xp * tau), np.sin(2 * xp * tau)
    e1, e2 = np.exp(-g1 * tau), np.exp(-g2 * tau)
    return np.column_stack([
        np.ones_like(tau), cp * cz * e1, c2 * e2,
        -b * tau * sp * cz * e1 - 2 * c * tau * s2 * e2,
        -b * tau * cp * sz * e1,
        -b * tau * cp * cz * e1,
        -c * tau * c2 * e2,
    ])


def _split_pair(spec, f0):
    """Axial frequency (Hz) from the resolved ``|f0 -/+ fz|`` line pair, or None.

    The two lines carry equal weight. Their sum is ``2 f0`` when ``fz < f0``
    and their difference is ``2 f0`` when the lower line is mirrored through
    zero. They are also the tallest lines, so a pair without the tallest
    peak is a sidelobe pair of one unresolved line.
    """
    tol = max(spec.resolution, spec.bin_width)
    found = find_peaks(spec, 0.05)
    if not found:
        return None
    top = max(found, key=lambda p: p.amplitude)
    peaks = [p for p in found if abs(p.freq - 2 * f0) > tol]
    best = None
    for i, a in enumerate(peaks):
        for b in peaks[i + 1:]:
            if top is not a and top is not b:
                continue
            if min(a.amplitude, b.amplitude) < 0.5 * max(a.amplitude, b.amplitude):
                continue
            if abs(a.freq + b.freq - 2 * f0) <= tol:
                fz, miss = 0.5 * (b.freq - a.freq), abs(a.freq + b.freq - 2 * f0)
            elif abs(b.freq - a.freq - 2 * f0) <= tol:
                fz, miss = 0.5 * (a.freq + b.freq), abs(b.freq - a.freq - 2 * f0)
            else:
                continue
            weight = a.amplitude + b.amplitude
            if best is None or (weight, -miss) > (best[1], -best[2]):
                best = (fz, weight, miss, a.freq, b.freq)
    if best is None or not resolvable(spec, best[3], best[4]):
        return None
    return best[0]


def _xi_z_from_trace(trace: SignalTrace, xi_perp: float) -> dict:
    spec = spectrum(trace, pad=4)
    out = {"bound": math.pi * spec.resolution}
    if xi_perp <= 0:
        # no transverse field: a single line at xi_z
        fit = fit_fid_frequency(trace)
        if fit.converged:
            # fit_fid_frequency reports half the line frequency
            out.update(xi_z=abs(2 * fit.params["x"]), resolved=True, rms=fit.residual_rms)
        else:
            out.update(xi_z=math.nan, resolved=False)
        return out
    pair = _split_pair(spec, xi_perp / TWO_PI)
    if pair is None:
        out.update(xi_z=math.nan, resolved=False)
        return out
    xz0 = TWO_PI * pair
    tau, y = trace.tau, trace.signal
    p0 = [float(y.mean()), -0.5, 0.125, xi_perp, xz0, 0.0, 0.0]
    rate = 1.0 / float(tau[-1])
    fit = least_squares_fit(_xi_z_model, _xi_z_jac, tau, y, p0,
                            ("a", "b", "c", "xi_perp", "xi_z", "g1", "g2"),
                            scale=[1, 1, 1, xi_perp, xz0, rate, rate])
    est = abs(fit.params["xi_z"]) if fit.converged else xz0
    out.update(xi_z=est, resolved=True, spectral_estimate=xz0, fit_converged=fit.converged,
               rms=fit.residual_rms)
    return out


def reconstruct_field(traces: ProtocolTraces,
                      constants: NVConstants = DEFAULT_CONSTANTS) -> ReconstructionResult:
    """Invert the three protocol traces into a field estimate."""
    diag: dict = {}
    fit = fit_fid_frequency(traces.fid_xi_perp)
    diag["fid_xi_perp"] = fit.to_json()
    xi_perp = abs(fit.params["x"]) if fit.converged else 0.0
    phi_defined = xi_perp > 0
    phi = math.nan
    if phi_defined:
        try:
            phi = extract_phi_e(traces.fid_phi_e, xi_perp)
        except InconsistentTraceError as exc:
            diag["phi_e_error"] = str(exc)
            phi_defined = False
    zinfo = _xi_z_from_trace(traces.fid_xi_z, xi_perp)
    diag["fid_xi_z"] = {k: v for k, v in zinfo.items() if k not in ("xi_z",)}
    xi_z = zinfo["xi_z"]
    e_perp = xi_perp / (TWO_PI * constants.d_perp)
    if phi_defined:
        ex, ey, _ = frequencies_to_field(xi_perp, phi, 0.0, constants)
    else:
        ex = ey = math.nan
    ez = abs(xi_z) / (TWO_PI * constants.d_par) if zinfo["resolved"] else math.nan
    return ReconstructionResult(
        xi_perp=xi_perp, xi_z=xi_z, phi_e=phi, E_perp=e_perp, E_x=float(ex), E_y=float(ey),
        E_z=ez, xi_z_resolved=bool(zinfo["resolved"]), xi_z_bound=zinfo["bound"],
        phi_e_defined=phi_defined, phi_e_ambiguous=phi_defined, diagnostics=diag)
