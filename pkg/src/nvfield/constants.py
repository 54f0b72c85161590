"""Physical constants and the overridable NV parameter block.

All internal quantities are SI. Frequencies stored on :class:`NVConstants`
are ordinary frequencies (Hz, Hz*m/V, Hz/T); the spin code multiplies by
``2*pi`` when it needs angular units.
"""
from __future__ import annotations

from dataclasses import dataclass, asdict

from scipy import constants as _sc

E_CHARGE = _sc.e
EPS0 = _sc.epsilon_0
N_A = _sc.N_A

# unit helpers
NM = 1e-9
UM = 1e-6
NS = 1e-9
US = 1e-6
MHZ = 1e6
V_PER_UM = 1e6
MOL_PER_L = 1e3  # mol/L -> mol/m^3
GAUSS = 1e-4
TWO_PI = 2.0 * 3.141592653589793


@dataclass(frozen=True)
class NVConstants:
    """Ground-state NV parameters.

    Attributes
    ----------
    D : float
        Zero-field splitting (Hz).
    d_par : float
        Axial Stark coefficient (Hz per V/m).
    d_perp : float
        Transverse Stark coefficient (Hz per V/m).
    gamma_e : float
        Electron gyromagnetic ratio (Hz/T).
    """

    D: float = 2.87e9
    d_par: float = 0.35e-2
    d_perp: float = 17e-2
    gamma_e: float = 28e9

    _JSON_KEYS = {
        "D_GHz": ("D", 1e9),
        "d_par_Hz_cm_per_V": ("d_par", 1e-2),
        "d_perp_Hz_cm_per_V": ("d_perp", 1e-2),
        "gamma_e_GHz_per_T": ("gamma_e", 1e9),
    }

    @classmethod
    def from_json(cls, block: dict) -> "NVConstants":
        unknown = set(block) - set(cls._JSON_KEYS)
        if unknown:
            raise KeyError(f"unknown constants keys: {sorted(unknown)}")
        kwargs = {}
        for key, value in block.items():
            attr, scale = cls._JSON_KEYS[key]
            kwargs[attr] = float(value) * scale
        return cls(**kwargs)

    def to_json(self) -> dict:
        values = asdict(self)
        return {key: values[attr] / scale for key, (attr, scale) in self._JSON_KEYS.items()}


DEFAULT_CONSTANTS = NVConstants()
