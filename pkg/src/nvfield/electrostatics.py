"""Fields inside a dielectric nanodiamond surrounded by electrolyte ions.

Ions sit uniformly in the shell ``r_nd <= |b| <= R`` with random signs. The
field at the centre of the diamond is the superposition of the single-ion
image-corrected fields ``q/(4 pi eps0) * 3/(2 eps_e + eps_nd) * b/|b|^3``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.polynomial import legendre

from .constants import E_CHARGE, EPS0, N_A
from .rng import stream
from .spectral import FitResult, r_squared

_DOMAIN_IONS = 1


@dataclass(frozen=True)
class DielectricConfig:
    eps_e: float = 17.5
    eps_nd: float = 5.8
    r_nd: float = 100e-9
    R: float = 400e-9

    def __post_init__(self):
        if not (self.eps_e > 0 and self.eps_nd > 0):
            raise ValueError("permittivities must be > 0")
        if not 0 < self.r_nd < self.R:
            raise ValueError("need 0 < r_nd < R")

    @property
    def prefactor(self) -> float:
        """``1/(4 pi eps0) * 3/(2 eps_e + eps_nd)`` in V m / C."""
        return 3.0 / (4 * math.pi * EPS0 * (2 * self.eps_e + self.eps_nd))

    @property
    def shell_volume(self) -> float:
        return 4 * math.pi / 3 * (self.R ** 3 - self.r_nd ** 3)

    @property
    def k(self) -> float:
        return 1.0 / self.r_nd - 1.0 / self.R


@dataclass(frozen=True)
class Ion:
    charge: float  # coulomb
    position: np.ndarray

    def __post_init__(self):
        if self.charge == 0:
            raise ValueError("ion charge must be nonzero")
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))


@dataclass(frozen=True)
class IonConfiguration:
    """Ion charges (C) and positions (m) stored as arrays."""

    charges: np.ndarray
    positions: np.ndarray
    concentration: float
    seed: Optional[int] = None

    def __len__(self):
        return self.charges.size

    @property
    def ions(self) -> list:
        return [Ion(q, p) for q, p in zip(self.charges, self.positions)]

    @classmethod
    def from_ions(cls, ions, concentration: float = 0.0, seed=None) -> "IonConfiguration":
        q = np.array([i.charge for i in ions], dtype=float)
        p = np.array([i.position for i in ions], dtype=float).reshape(-1, 3)
        return cls(q, p, concentration, seed)


@dataclass(frozen=True)
class FieldStats:
    mean: np.ndarray
    std: np.ndarray
    trials: int
    n_ions: int = 0
    n_summed: int = 0

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if np.any(np.asarray(self.std) < 0):
            raise ValueError("std components must be >= 0")


def single_ion_field(ion: Ion, cfg: DielectricConfig) -> np.ndarray:
    b = ion.position
    nb = float(np.linalg.norm(b))
    if nb < cfg.r_nd * (1 - 1e-12):
        raise ValueError("ion lies inside the nanodiamond")
    return ion.charge * cfg.prefactor * b / nb ** 3


def _fields(charges, positions, cfg):
    nb = np.linalg.norm(positions, axis=-1)
    return (charges * cfg.prefactor / nb ** 3)[..., None] * positions


def potential_series(r: float, theta: float, b: float, cfg: DielectricConfig, l_max: int,
                     q: float = E_CHARGE) -> float:
    """Interior potential (V) of a point charge at distance ``b`` on the polar axis.

    Partial sum over Legendre orders ``0..l_max`` evaluated at polar
    coordinates ``(r, theta)`` inside the diamond.
    """
    if l_max < 0:
        raise ValueError("l_max must be >= 0")
    if r >= cfg.r_nd:
        raise ValueError("series only valid inside the nanodiamond (r < r_nd)")
    if b < cfg.r_nd:
        raise ValueError("charge must lie outside the nanodiamond")
    l = np.arange(l_max + 1)
    coef = (2 * l + 1) / (cfg.eps_nd * l + cfg.eps_e * (l + 1)) * (r / b) ** l
    return q / (4 * math.pi * EPS0 * b) * float(legendre.legval(math.cos(theta), coef))


def ion_count(c: float, cfg: DielectricConfig) -> int:
    return int(round(c * N_A * cfg.shell_volume))


def _trial_count(rng, c, cfg, poisson):
    mean = c * N_A * cfg.shell_volume
    return int(rng.poisson(mean)) if poisson else int(round(mean))


def _draw(rng, n, cfg):
    u = rng.random(n)
    radius = np.cbrt(cfg.r_nd ** 3 + u * (cfg.R ** 3 - cfg.r_nd ** 3))
    direction = rng.normal(size=(n, 3))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    charges = np.where(rng.random(n) < 0.5, E_CHARGE, -E_CHARGE)
    return charges, radius[:, None] * direction


def sample_ions(c: float, cfg: DielectricConfig, seed: int = 0, index: int = 0,
                poisson: bool = False) -> IonConfiguration:
    """Uniform placement of ions of random sign in the shell (``c`` in mol/m^3).

    The ion count is ``round(c N_A V_shell)``, or a Poisson draw with that
    mean when ``poisson`` is set.
    """
    if not c > 0:
        raise ValueError("concentration must be > 0")
    rng = stream(seed, index, _DOMAIN_IONS)
    n = _trial_count(rng, c, cfg, poisson)
    if n == 0:
        warnings.warn("concentration too low: no ions in the shell", stacklevel=2)
    charges, pos = _draw(rng, n, cfg)
    return IonConfiguration(charges, pos, c, seed)


def total_field(config: IonConfiguration, cfg: DielectricConfig) -> np.ndarray:
    if len(config) == 0:
        return np.zeros(3)
    return _fields(config.charges, config.positions, cfg).sum(axis=0)


def field_stats_mc(c: float, cfg: DielectricConfig, trials: int, seed: int = 0,
                   max_ions: Optional[int] = 20000, series: int = 0,
                   chunk: int = 2_000_000, poisson: bool = False) -> FieldStats:
    """Per-component mean and standard deviation of the centre field over random configurations.

    When a configuration holds more than ``max_ions`` ions, each trial sums
    ``max_ions`` of them and the sum is rescaled by ``sqrt(N / max_ions)``.
    Because the ions are i.i.d. this leaves the variance estimate unbiased;
    ``max_ions=None`` always sums every ion. ``series`` selects an
    independent family of trial streams, e.g. one per concentration.
    ``poisson`` draws the ion count of every trial from a Poisson law.
    """
    if trials < 2:
        raise ValueError("field_stats_mc needs trials >= 2")
    n = ion_count(c, cfg)
    fields = np.zeros((trials, 3))
    summed = 0
    for t in range(trials):
        rng = stream(seed, (int(series) << 24) | t, _DOMAIN_IONS)
        n_t = _trial_count(rng, c, cfg, poisson) if poisson else n
        n_sum = n_t if max_ions is None else min(n_t, int(max_ions))
        summed = max(summed, n_sum)
        acc = np.zeros(3)
        for start in range(0, n_sum, chunk):
            q, p = _draw(rng, min(chunk, n_sum - start), cfg)
            acc += _fields(q, p, cfg).sum(axis=0)
        fields[t] = math.sqrt(n_t / n_sum) * acc if n_sum > 0 else acc
    return FieldStats(fields.mean(axis=0), fields.std(axis=0, ddof=1), trials, n, summed)


def coefficient_A(cfg: DielectricConfig, q: float = E_CHARGE) -> float:
    return abs(q) / (EPS0 * (2 * cfg.eps_e + cfg.eps_nd)) * math.sqrt(3 * N_A / (4 * math.pi))


def sigma_closed_form(c, cfg: DielectricConfig, q: float = E_CHARGE):
    """Per-component field standard deviation (V/m) for concentration ``c`` (mol/m^3)."""
    c = np.asarray(c, dtype=float)
    if np.any(c < 0):
        raise ValueError("concentration must be >= 0")
    out = coefficient_A(cfg, q) * np.sqrt(c * cfg.k)
    return float(out) if out.ndim == 0 else out


def concentration_from_sigma(sigma, cfg: DielectricConfig, q: float = E_CHARGE):
    """Inverse of :func:`sigma_closed_form`."""
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0):
        raise ValueError("sigma must be >= 0")
    out = (sigma / coefficient_A(cfg, q)) ** 2 / cfg.k
    return float(out) if out.ndim == 0 else out


def fit_sqrt_law(points, cfg: DielectricConfig) -> FitResult:
    """Linear least squares for ``A`` in ``sigma = A sqrt(c k)``.

    ``points`` holds ``(c [mol/m^3], sigma [V/m])`` pairs.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
        raise ValueError("fit_sqrt_law needs at least 2 (c, sigma) points")
    c, sig = pts.T
    if np.any(c < 0) or np.ptp(c) == 0:
        raise ValueError("degenerate data: need distinct non-negative concentrations")
    x = np.sqrt(c * cfg.k)
    sxx = float(x @ x)
    A = float(x @ sig) / sxx
    resid = sig - A * x
    err = math.sqrt(float(resid @ resid) / (len(c) - 1) / sxx)
    return FitResult({"A": A}, {"A": err}, float(np.sqrt(np.mean(resid ** 2))), True,
                     {"r2": r_squared(sig, A * x), "A_theory": coefficient_A(cfg)})
