"""Rotating-frame NV ground-state Hamiltonian and its closed-form propagators.

Basis ordering is fixed everywhere as ``(|+1>, |0>, |-1>)``. Frequencies are
angular (rad/s); reported spectra divide by ``2*pi``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .constants import DEFAULT_CONSTANTS, NVConstants, TWO_PI

PLUS, ZERO, MINUS = 0, 1, 2

SZ = np.diag([1.0, 0.0, -1.0]).astype(complex)
SZ2 = SZ @ SZ
SP = np.sqrt(2.0) * np.array([[0, 1, 0], [0, 0, 1], [0, 0, 0]], dtype=complex)
SM = SP.conj().T
SX = (SP + SM) / 2
SY = (SP - SM) / 2j
IDENTITY = np.eye(3, dtype=complex)

KET_PLUS = IDENTITY[:, PLUS].copy()
KET_ZERO = IDENTITY[:, ZERO].copy()
KET_MINUS = IDENTITY[:, MINUS].copy()


@dataclass(frozen=True)
class NVFrequencies:
    """Frequency contributions of the ground-state Hamiltonian (rad/s)."""

    delta: float = 0.0
    beta_z: float = 0.0
    xi_z: float = 0.0
    xi_perp: float = 0.0
    phi_e: float = 0.0

    def __post_init__(self):
        vals = (self.delta, self.beta_z, self.xi_z, self.xi_perp, self.phi_e)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("NVFrequencies fields must be finite")
        if self.xi_perp < 0:
            raise ValueError("xi_perp must be >= 0")

    @property
    def x(self) -> float:
        return math.hypot(self.beta_z, self.xi_perp)


@dataclass(frozen=True)
class DriveSettings:
    """Microwave drive of the two perpendicular wires.

    ``phi`` is the phase between the wires; the transition weights follow
    ``eps_pm = (1 - 1j*exp(-/+ 1j*phi)) / 2``. ``eps`` overrides the pair
    directly, which is how a single-wire linear drive is represented.
    """

    omega: float
    phi: float = 0.0
    eps: Optional[tuple] = field(default=None)

    def __post_init__(self):
        if not (self.omega > 0 and math.isfinite(self.omega)):
            raise ValueError("drive amplitude omega must be > 0")
        if self.eps is not None:
            ep, em = self.eps
            norm = abs(ep) ** 2 + abs(em) ** 2
            if abs(norm - 1.0) > 1e-12:
                raise ValueError("|eps_+|^2 + |eps_-|^2 must equal 1")

    @property
    def eps_plus(self) -> complex:
        if self.eps is not None:
            return complex(self.eps[0])
        return (1 - 1j * np.exp(-1j * self.phi)) / 2

    @property
    def eps_minus(self) -> complex:
        if self.eps is not None:
            return complex(self.eps[1])
        return (1 - 1j * np.exp(1j * self.phi)) / 2

    @classmethod
    def polarized(cls, omega: float, polarization: str) -> "DriveSettings":
        """Drive for a pulse polarization label: ``plus``, ``minus`` or ``linear``.

        ``plus`` drives 0<->+1 (phi = -pi/2), ``minus`` drives 0<->-1
        (phi = +pi/2). ``linear`` is a single-wire drive with equal real
        weights on both transitions, which prepares ``(|+1> + |-1>)/sqrt(2)``
        up to a global phase.
        """
        if polarization == "plus":
            return cls(omega, -math.pi / 2)
        if polarization == "minus":
            return cls(omega, math.pi / 2)
        if polarization == "linear":
            r = 1 / math.sqrt(2)
            return cls(omega, 0.0, eps=(r, r))
        raise ValueError(f"unknown polarization {polarization!r}")


@dataclass(frozen=True)
class EigenSystem:
    theta: float
    omega_plus: float
    omega_minus: float
    ket_plus: np.ndarray
    ket_minus: np.ndarray
    ket_zero: np.ndarray


def field_to_frequencies(E, B_z: float = 0.0, omega_d: Optional[float] = None,
                         constants: NVConstants = DEFAULT_CONSTANTS) -> NVFrequencies:
    """Map a field vector (V/m), axial B (T) and drive frequency (rad/s) to frequencies.

    ``omega_d`` defaults to resonance with the zero-field splitting (delta = 0).
    """
    ex, ey, ez = (float(v) for v in E)
    if omega_d is None:
        omega_d = TWO_PI * constants.D
    e_perp = math.hypot(ex, ey)
    return NVFrequencies(
        delta=TWO_PI * constants.D - omega_d,
        beta_z=TWO_PI * constants.gamma_e * B_z,
        xi_z=TWO_PI * constants.d_par * ez,
        xi_perp=TWO_PI * constants.d_perp * e_perp,
        phi_e=math.atan2(ey, ex) % TWO_PI,
    )


def frequencies_to_field(xi_perp: float, phi_e: float, xi_z: float,
                         constants: NVConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    e_perp = xi_perp / (TWO_PI * constants.d_perp)
    return np.array([e_perp * math.cos(phi_e), e_perp * math.sin(phi_e),
                     xi_z / (TWO_PI * constants.d_par)])


def build_h0(f: NVFrequencies) -> np.ndarray:
    h = np.zeros((3, 3), dtype=complex)
    h[PLUS, PLUS] = f.delta + f.xi_z + f.beta_z
    h[MINUS, MINUS] = f.delta + f.xi_z - f.beta_z
    # S+^2 = 2|+1><-1|, so the -xi/2 prefactor leaves -xi on the off-diagonal
    coupling = -f.xi_perp * np.exp(1j * f.phi_e)
    h[PLUS, MINUS] = coupling
    h[MINUS, PLUS] = np.conj(coupling)
    return h


def build_drive(d: DriveSettings) -> np.ndarray:
    h = np.zeros((3, 3), dtype=complex)
    h[ZERO, MINUS] = d.eps_minus
    h[MINUS, ZERO] = np.conj(d.eps_minus)
    h[PLUS, ZERO] = d.eps_plus
    h[ZERO, PLUS] = np.conj(d.eps_plus)
    return d.omega / np.sqrt(2.0) * h


def free_propagator_arrays(shift, beta_z, xi_perp, phi_e, tau) -> np.ndarray:
    """Closed-form ``exp(-i H0 tau)`` broadcast over all arguments.

    ``shift`` is ``delta + xi_z``. Returns an array of shape ``broadcast + (3, 3)``.
    """
    shift, beta_z, xi_perp, phi_e, tau = np.broadcast_arrays(
        *(np.asarray(a, dtype=float) for a in (shift, beta_z, xi_perp, phi_e, tau)))
    x = np.hypot(beta_z, xi_perp)
    c = np.cos(tau * x)
    # sin(tau x)/x with the x -> 0 limit equal to tau
    sx = tau * np.sinc(tau * x / np.pi)
    ph = np.exp(-1j * tau * shift)
    out = np.zeros(shift.shape + (3, 3), dtype=complex)
    out[..., ZERO, ZERO] = 1.0
    out[..., PLUS, PLUS] = ph * (c - 1j * beta_z * sx)
    out[..., MINUS, MINUS] = ph * (c + 1j * beta_z * sx)
    out[..., PLUS, MINUS] = ph * 1j * xi_perp * sx * np.exp(1j * phi_e)
    out[..., MINUS, PLUS] = ph * 1j * xi_perp * sx * np.exp(-1j * phi_e)
    return out


def free_propagator(f: NVFrequencies, tau) -> np.ndarray:
    tau_arr = np.asarray(tau, dtype=float)
    if np.any(tau_arr < 0):
        raise ValueError("free evolution time must be >= 0")
    return free_propagator_arrays(f.delta + f.xi_z, f.beta_z, f.xi_perp, f.phi_e, tau_arr)


def drive_propagator(d: DriveSettings, t) -> np.ndarray:
    """Hard-pulse propagator ``exp(-i H_d t)``; ``t`` may be an array."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("pulse duration must be >= 0")
    a = d.omega * t_arr / np.sqrt(2.0)
    c, s = np.cos(a), np.sin(a)
    ep, em = d.eps_plus, d.eps_minus
    out = np.zeros(t_arr.shape + (3, 3), dtype=complex)
    out[..., PLUS, PLUS] = 1 - abs(ep) ** 2 + c * abs(ep) ** 2
    out[..., MINUS, MINUS] = 1 - abs(em) ** 2 + c * abs(em) ** 2
    out[..., ZERO, ZERO] = c
    out[..., PLUS, MINUS] = (c - 1) * ep * em
    out[..., MINUS, PLUS] = (c - 1) * np.conj(ep * em)
    out[..., ZERO, MINUS] = -1j * s * em
    out[..., MINUS, ZERO] = -1j * s * np.conj(em)
    out[..., PLUS, ZERO] = -1j * s * ep
    out[..., ZERO, PLUS] = -1j * s * np.conj(ep)
    return out


def pulse_durations(d: DriveSettings) -> tuple[float, float]:
    """Return ``(T_pi, T_pi/2)``: transfer amplitude is ``sin(omega t / sqrt 2)``."""
    t_pi = math.pi / (math.sqrt(2.0) * d.omega)
    return t_pi, t_pi / 2


def rotation_time(d: DriveSettings, angle: float) -> float:
    """Pulse length that rotates the driven transition by ``angle`` (rad)."""
    return angle / (math.sqrt(2.0) * d.omega)


def eigensystem(f: NVFrequencies) -> EigenSystem:
    # atan2 keeps |+> on the +x branch; beta_z = 0 gives theta = -pi/2
    theta = math.atan2(-f.xi_perp, f.beta_z)
    ch, sh = math.cos(theta / 2), math.sin(theta / 2)
    up, dn = np.exp(0.5j * f.phi_e), np.exp(-0.5j * f.phi_e)
    kp = np.zeros(3, dtype=complex)
    km = np.zeros(3, dtype=complex)
    kp[PLUS], kp[MINUS] = ch * up, sh * dn
    km[PLUS], km[MINUS] = sh * up, -ch * dn
    base = f.delta + f.xi_z
    return EigenSystem(theta, base + f.x, base - f.x, kp, km, KET_ZERO.copy())


def full_pulse_propagator(f: NVFrequencies, d: DriveSettings, t: float) -> np.ndarray:
    """``exp(-i (H0 + H_d) t)`` by Hermitian eigendecomposition (soft-pulse model)."""
    h = build_h0(f) + build_drive(d)
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w * t)) @ v.conj().T


def populations(psi) -> np.ndarray:
    psi = np.asarray(psi)
    return np.abs(psi) ** 2
