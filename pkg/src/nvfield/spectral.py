"""Spectra, peak analysis and least-squares fits of FID and Hahn traces."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import optimize, signal as sps

from .pulse_engine import SignalTrace

MAX_ITER = 200
PARAM_TOL = 1e-10
VALLEY_FRACTION = 0.9


@dataclass(frozen=True)
class Spectrum:
    """One-sided DFT magnitude; ``freqs`` in Hz.

    ``amplitude`` is the unnormalised ``|DFT|`` of the mean-subtracted signal,
    so a cosine of amplitude ``a`` over ``N`` samples peaks near ``a*N/2``.
    """

    freqs: np.ndarray
    amplitude: np.ndarray
    resolution: float
    bin_width: float
    n_samples: int
    pad: int = 1
    window: str = "none"

    def __post_init__(self):
        if np.any(np.diff(self.freqs) <= 0):
            raise ValueError("spectrum frequencies must be strictly increasing")
        if np.any(self.amplitude < 0):
            raise ValueError("spectrum amplitudes must be >= 0")

    def amplitude_at(self, freq: float) -> float:
        return float(np.interp(freq, self.freqs, self.amplitude))


@dataclass(frozen=True)
class Peak:
    freq: float
    amplitude: float


@dataclass
class FitResult:
    params: dict
    stderr: dict
    residual_rms: float
    converged: bool
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.converged and not math.isfinite(self.residual_rms):
            raise ValueError("a converged fit must have a finite residual")
        if any(v < 0 for v in self.stderr.values() if not math.isnan(v)):
            raise ValueError("standard errors must be >= 0")

    def to_json(self) -> dict:
        return {"params": dict(self.params), "stderr": dict(self.stderr),
                "residual_rms": self.residual_rms, "converged": bool(self.converged)}


def _uniform_step(tau: np.ndarray) -> float:
    if tau.size < 8:
        raise ValueError("spectrum needs at least 8 samples")
    steps = np.diff(tau)
    dt = float(steps.mean())
    if dt <= 0 or np.max(np.abs(steps - dt)) > 1e-6 * dt:
        raise ValueError("spectrum needs a uniform tau grid")
    return dt


def spectrum(trace: SignalTrace, pad: int = 1, window: str = "none") -> Spectrum:
    """Magnitude spectrum of a uniformly sampled trace.

    ``pad`` zero-pads to ``pad*N`` points, which only interpolates the
    frequency axis. ``window`` is ``"none"`` or ``"hann"``.
    """
    dt = _uniform_step(trace.tau)
    if pad < 1:
        raise ValueError("pad must be >= 1")
    y = trace.signal - trace.signal.mean()
    if window == "hann":
        y = y * np.hanning(y.size)
    elif window != "none":
        raise ValueError(f"unknown window {window!r}")
    n = y.size * int(pad)
    amp = np.abs(np.fft.rfft(y, n=n))
    freqs = np.fft.rfftfreq(n, dt)
    span = float(trace.tau[-1] - trace.tau[0])
    return Spectrum(freqs, amp, 1.0 / span, 1.0 / (n * dt), y.size, int(pad), window)


def parseval_ratio(signal) -> float:
    """``sum |y|^2 / ((1/N) sum |Y|^2)`` over the full two-sided DFT; equals 1."""
    y = np.asarray(signal, dtype=float)
    y = y - y.mean()
    energy = float(np.sum(y ** 2))
    spec = float(np.sum(np.abs(np.fft.fft(y)) ** 2)) / y.size
    return energy / spec if spec > 0 else 1.0


def _parabolic(amp: np.ndarray, i: int) -> tuple[float, float]:
    if i <= 0 or i >= amp.size - 1:
        return float(i), float(amp[i])
    a, b, c = amp[i - 1], amp[i], amp[i + 1]
    den = a - 2 * b + c
    if den == 0:
        return float(i), float(b)
    shift = 0.5 * (a - c) / den
    return i + shift, float(b - 0.25 * (a - c) * shift)


def find_peaks(s: Spectrum, min_prominence: float = 0.3) -> list:
    """Local maxima whose prominence exceeds ``min_prominence`` times the tallest peak.

    Frequencies are refined by 3-point parabolic interpolation; the list is
    sorted by frequency.
    """
    amp = s.amplitude
    top = float(amp.max()) if amp.size else 0.0
    if top <= 1e-12 * max(1, s.n_samples):
        return []
    idx, _ = sps.find_peaks(amp, prominence=min_prominence * top)
    out = []
    for i in idx:
        pos, height = _parabolic(amp, int(i))
        out.append(Peak(float(np.interp(pos, np.arange(amp.size), s.freqs)), height))
    return out


def _nearest(peaks, f):
    return min(peaks, key=lambda p: abs(p.freq - f)) if peaks else None


def resolvable(s: Spectrum, f1: float, f2: float, min_prominence: float = 0.01) -> bool:
    """Two lines are resolved when both show up as separate peaks and the
    lowest point between them is below 0.9 of the smaller peak."""
    if f1 == f2:
        raise ValueError("f1 and f2 must differ")
    f1, f2 = sorted((f1, f2))
    peaks = find_peaks(s, min_prominence)
    tol = 0.5 * (f2 - f1)
    p1, p2 = _nearest(peaks, f1), _nearest(peaks, f2)
    if p1 is None or p2 is None or p1 is p2:
        return False
    if abs(p1.freq - f1) > tol or abs(p2.freq - f2) > tol:
        return False
    between = (s.freqs >= p1.freq) & (s.freqs <= p2.freq)
    if not np.any(between):
        return False
    valley = float(s.amplitude[between].min())
    return valley < VALLEY_FRACTION * min(p1.amplitude, p2.amplitude)


def r_squared(y, y_fit) -> float:
    y = np.asarray(y, dtype=float)
    ss_res = float(np.sum((y - np.asarray(y_fit, dtype=float)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    return 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else -math.inf)


def least_squares_fit(model: Callable, jac: Callable, x, y, p0: Sequence[float],
                      names: Sequence[str], scale: Optional[Sequence[float]] = None) -> FitResult:
    """Damped Gauss-Newton (Levenberg-Marquardt) fit with an analytic Jacobian.

    Parameters are internally divided by ``scale`` so that all are of order one.
    Standard errors come from ``s^2 (J^T J)^-1``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    scale = np.abs(np.asarray(scale if scale is not None else p0, dtype=float))
    scale[scale == 0] = 1.0
    q0 = np.asarray(p0, dtype=float) / scale

    def resid(q):
        return model(x, *(q * scale)) - y

    def jq(q):
        return jac(x, *(q * scale)) * scale

    try:
        res = optimize.least_squares(resid, q0, jac=jq, method="lm", xtol=PARAM_TOL,
                                     ftol=1e-15, gtol=1e-15, max_nfev=MAX_ITER)
    except (ValueError, np.linalg.LinAlgError) as exc:
        nan = {n: math.nan for n in names}
        return FitResult(nan, dict(nan), math.nan, False, {"message": str(exc)})
    p = res.x * scale
    r = res.fun
    dof = max(1, y.size - p.size)
    s2 = float(r @ r) / dof
    J = jac(x, *p)
    try:
        cov = np.linalg.inv(J.T @ J) * s2
        err = np.sqrt(np.clip(np.diag(cov), 0, None))
    except np.linalg.LinAlgError:
        err = np.full(p.size, math.nan)
    rms = float(np.sqrt(np.mean(r ** 2)))
    converged = bool(res.status > 0 and np.all(np.isfinite(p)) and math.isfinite(rms))
    diag = {"nfev": int(res.nfev), "status": int(res.status), "message": res.message,
            "r2": r_squared(y, y + r)}
    return FitResult(dict(zip(names, map(float, p))), dict(zip(names, map(float, err))),
                     rms, converged, diag)


# ------------------------------------------------------------------ Hahn decay

def hahn_model(tau, xi_perp, t2):
    return 0.25 * (1 - np.cos(2 * tau * xi_perp) * np.exp(-tau / t2)) ** 2


def _hahn_jac(tau, xi_perp, t2):
    e = np.exp(-tau / t2)
    c = np.cos(2 * tau * xi_perp)
    base = 0.5 * (1 - c * e)
    d_xi = base * (2 * tau * np.sin(2 * tau * xi_perp) * e)
    d_t2 = base * (-c * e * tau / t2 ** 2)
    return np.column_stack([d_xi, d_t2])


def _envelope_time(tau, y, fallback):
    # |1 - 2 sqrt(S)| = |cos| exp(-tau/T2); fit a line to log of its maxima
    g = np.abs(1 - 2 * np.sqrt(np.clip(y, 0, None)))
    idx, _ = sps.find_peaks(g)
    idx = idx[g[idx] > 1e-6]
    if idx.size < 3:
        return fallback
    slope = np.polyfit(tau[idx], np.log(g[idx]), 1)[0]
    return -1.0 / slope if slope < 0 else fallback


def fit_hahn_decay(trace: SignalTrace, xi_perp_guess: Optional[float] = None,
                   t2_guess: Optional[float] = None) -> FitResult:
    """Fit ``(1 - cos(2 tau xi) exp(-tau/T2))^2 / 4`` for ``xi_perp`` (rad/s) and ``T2`` (s)."""
    tau, y = trace.tau, trace.signal
    span = float(tau[-1] - tau[0])
    if xi_perp_guess is None:
        peaks = find_peaks(spectrum(trace, pad=4), 0.2)
        if not peaks:
            return FitResult({"xi_perp": math.nan, "T2": math.nan},
                             {"xi_perp": math.nan, "T2": math.nan}, math.nan, False,
                             {"message": "no oscillation found"})
        # the strongest line sits at 2*xi/2pi
        xi_perp_guess = math.pi * max(peaks, key=lambda p: p.amplitude).freq
    if t2_guess is None:
        t2_guess = _envelope_time(tau, y, span / 2)
    fit = least_squares_fit(hahn_model, _hahn_jac, tau, y, [xi_perp_guess, t2_guess],
                            ("xi_perp", "T2"))
    t2, t2_err = fit.params["T2"], fit.stderr["T2"]
    flags = []
    if fit.converged and (span < 2 * t2 or t2_err > 0.1 * abs(t2)):
        flags.append("trace too short for a reliable T2")
    fit.diagnostics["flags"] = flags
    fit.diagnostics["span"] = span
    return fit


# ----------------------------------------------------------------- alpha law

def fit_alpha(points) -> FitResult:
    """Least-squares ``alpha`` for ``T2_E = alpha E_m / sigma^2``.

    ``points`` holds ``(E_m, sigma_E, T2_E)`` triples in SI units. The fit is
    linear in the form ``T2_E sigma^2 = alpha E_m``; ``r2`` is evaluated on
    ``T2_E`` itself.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 3:
        raise ValueError("fit_alpha needs at least 3 (E_m, sigma_E, T2_E) points")
    e_m, sig, t2e = pts.T
    if not np.all(np.isfinite(pts)) or np.any(sig <= 0):
        raise ValueError("points must be finite with sigma_E > 0")
    if float(e_m @ e_m) == 0:
        raise ValueError("degenerate design: all E_m are zero")
    yv = t2e * sig ** 2
    alpha = float(e_m @ yv / (e_m @ e_m))
    resid = yv - alpha * e_m
    dof = pts.shape[0] - 1
    err = math.sqrt(float(resid @ resid) / dof / float(e_m @ e_m))
    pred = alpha * e_m / sig ** 2
    rms = float(np.sqrt(np.mean((t2e - pred) ** 2)))
    return FitResult({"alpha": alpha}, {"alpha": err}, rms, True,
                     {"r2": r_squared(t2e, pred), "n": int(pts.shape[0])})


# -------------------------------------------------------------- FID frequency

def _fid_model(tau, offset, amp, x, gamma):
    return offset + amp * np.cos(2 * x * tau) * np.exp(-gamma * tau)


def _fid_jac(tau, offset, amp, x, gamma):
    e = np.exp(-gamma * tau)
    c = np.cos(2 * x * tau)
    return np.column_stack([np.ones_like(tau), c * e, -amp * 2 * tau * np.sin(2 * x * tau) * e,
                            -amp * c * e * tau])


def fit_fid_frequency(trace: SignalTrace) -> FitResult:
    """Oscillation frequency ``x`` (rad/s) of a ``cos^2(x tau)``-type FID.

    The spectral peak (``2x/2pi``) seeds a least-squares fit of
    ``offset + amp cos(2 x tau) exp(-gamma tau)``.
    """
    names = ("x", "offset", "amp", "gamma")
    nan = {n: math.nan for n in names}
    tau, y = trace.tau, trace.signal
    spec = spectrum(trace, pad=4)
    peaks = find_peaks(spec, 0.2)
    floor = 1e-9 * spec.n_samples
    if not peaks or max(p.amplitude for p in peaks) < floor:
        return FitResult(nan, dict(nan), math.nan, False, {"message": "no peak above noise floor"})
    best = max(peaks, key=lambda p: p.amplitude)
    x0 = math.pi * best.freq
    amp0 = 2 * best.amplitude / (spec.n_samples) * (1 if y[0] >= y.mean() else -1)
    fit = least_squares_fit(_fid_model, _fid_jac, tau, y, [y.mean(), amp0, x0, 0.0],
                            ("offset", "amp", "x", "gamma"),
                            scale=[1.0, max(abs(amp0), 1e-3), x0, max(x0 * 1e-3, 1.0)])
    params = {k: fit.params[k] for k in names}
    stderr = {k: fit.stderr[k] for k in names}
    periods = x0 * float(tau[-1] - tau[0]) / math.pi
    fit.diagnostics.update(spectral_estimate=x0, periods=periods)
    return FitResult(params, stderr, fit.residual_rms, fit.converged, fit.diagnostics)
