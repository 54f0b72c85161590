"""Dephasing and fluctuating-field simulations.

Free evolution with dephasing is integrated with the classical fourth-order
Runge-Kutta scheme on the Lindblad equation. Fluctuating electric fields are
piecewise constant on intervals of ``resample_dt`` and each trajectory draws
from its own counter-derived random stream, so ensemble averages do not depend
on how trajectories are batched.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .constants import DEFAULT_CONSTANTS, NVConstants, TWO_PI
from .dsl import Free, Pulse, PulseSequence, builtin
from .rng import stream
from .pulse_engine import LEVEL_INDEX, SignalTrace, _pulse_matrix
from .spin import (MINUS, PLUS, SZ, ZERO, DriveSettings, NVFrequencies,
                   build_h0, free_propagator_arrays)


class StepSizeError(RuntimeError):
    pass


@dataclass(frozen=True)
class NoiseModel:
    """Dephasing and field-fluctuation parameters (SI units).

    ``t2_star=None`` disables Lindblad dephasing and ``t2_int=None`` disables
    the intrinsic Hahn envelope. ``field_mean`` is either one value applied to
    every component or a 3-vector.
    """

    t2_star: Optional[float] = None
    t2_int: Optional[float] = 100e-6
    field_mean: object = 0.0
    field_std: float = 0.0
    resample_dt: float = 10e-9
    trajectories: int = 1000
    seed: int = 0

    def __post_init__(self):
        for name in ("t2_star", "t2_int"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ValueError(f"{name} must be > 0 or None")
        if self.field_std < 0:
            raise ValueError("field_std must be >= 0")
        if not self.resample_dt > 0:
            raise ValueError("resample_dt must be > 0")
        if self.trajectories < 1:
            raise ValueError("trajectories must be >= 1")
        if np.shape(self.field_mean) not in ((), (3,)):
            raise ValueError("field_mean must be a scalar or a 3-vector")

    @property
    def mean_vector(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.field_mean, dtype=float), (3,)).copy()


# ---------------------------------------------------------------- Lindblad core

def dephasing_operators(t2_star: Optional[float]) -> list:
    if t2_star is None or math.isinf(t2_star):
        return []
    return [math.sqrt(1.0 / t2_star) * SZ]


def _lindblad_rhs(rho, H, collapse):
    out = -1j * (H @ rho - rho @ H)
    for L in collapse:
        Ld = L.conj().T
        LdL = Ld @ L
        out = out + L @ rho @ Ld - 0.5 * (LdL @ rho + rho @ LdL)
    return out


def _max_rate(H, collapse) -> float:
    w = np.linalg.eigvalsh(H) if np.any(H) else np.zeros(1)
    rate = float(w.max() - w.min())
    for L in collapse:
        rate += float(np.linalg.norm(L.conj().T @ L, 2))
    return rate


def lindblad_step(rho, H, collapse: Sequence, dt: float) -> np.ndarray:
    """One RK4 step of ``drho/dt = -i[H, rho] + sum_k D[L_k] rho``."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    rate = _max_rate(H, collapse)
    if rate > 0 and dt > 0.05 / rate + 1e-300:
        raise StepSizeError(f"dt={dt:.3g} s exceeds 0.05/max|omega| = {0.05 / rate:.3g} s")
    rho = np.asarray(rho, dtype=complex)
    k1 = _lindblad_rhs(rho, H, collapse)
    k2 = _lindblad_rhs(rho + 0.5 * dt * k1, H, collapse)
    k3 = _lindblad_rhs(rho + 0.5 * dt * k2, H, collapse)
    k4 = _lindblad_rhs(rho + dt * k3, H, collapse)
    out = rho + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    if abs(np.trace(out) - np.trace(rho)) > 1e-6:
        raise StepSizeError("trace drift above 1e-6 in a single step")
    return out


def liouvillian(H, collapse) -> np.ndarray:
    """Row-major vectorised generator: ``vec(drho/dt) = Lv @ vec(rho)``."""
    H = np.asarray(H, dtype=complex)
    n = H.shape[-1]
    eye = np.eye(n)
    if H.ndim == 2:
        lv = -1j * (np.kron(H, eye) - np.kron(eye, H.T))
    else:
        lv = -1j * (np.einsum("bij,kl->bikjl", H, eye) - np.einsum("ij,blk->bikjl", eye, H))
        lv = lv.reshape(H.shape[0], n * n, n * n)
    for L in collapse:
        LdL = L.conj().T @ L
        lv = lv + np.kron(L, L.conj()) - 0.5 * (np.kron(LdL, eye) + np.kron(eye, LdL.T))
    return lv


def _rk4_matrix(lv, h):
    """Amplification matrix of one RK4 step for the linear system ``y' = lv y``."""
    a = lv * h
    eye = np.eye(lv.shape[-1])
    a2 = a @ a
    a3 = a2 @ a
    return eye + a + a2 / 2 + a3 / 6 + a3 @ a / 24


def _substeps(duration, rate, dt_max):
    limit = dt_max if dt_max is not None else (0.02 / rate if rate > 0 else np.inf)
    return max(1, int(math.ceil(duration / limit))) if np.isfinite(limit) else 1


def evolve_lindblad(rho, H, collapse, duration: float, dt_max: Optional[float] = None) -> np.ndarray:
    """Integrate for ``duration`` with fixed RK4 steps, halving them on trace drift."""
    rho = np.asarray(rho, dtype=complex)
    if duration == 0:
        return rho.copy()
    rate = _max_rate(H, collapse)
    n = _substeps(duration, rate, dt_max)
    lv = liouvillian(H, collapse)
    vec0 = rho.reshape(-1)
    for _ in range(8):
        step = np.linalg.matrix_power(_rk4_matrix(lv, duration / n), n)
        vec = step @ vec0
        out = vec.reshape(rho.shape)
        if abs(np.trace(out) - np.trace(rho)) <= 1e-8:
            return out
        n *= 2
    raise StepSizeError("trace drift persists after step halving")


def _free_superops(H, collapse, durations, dt_max=None) -> np.ndarray:
    """RK4 superoperators for each of ``durations`` (any order), built cumulatively."""
    durations = np.asarray(durations, dtype=float)
    order = np.argsort(durations, kind="stable")
    lv = liouvillian(H, collapse)
    rate = _max_rate(H, collapse)
    out = np.empty((durations.size, lv.shape[0], lv.shape[0]), dtype=complex)
    current = np.eye(lv.shape[0], dtype=complex)
    t = 0.0
    for idx in order:
        gap = durations[idx] - t
        if gap > 0:
            n = _substeps(gap, rate, dt_max)
            current = np.linalg.matrix_power(_rk4_matrix(lv, gap / n), n) @ current
            t = durations[idx]
        out[idx] = current
    return out


def _unitary_superop(U):
    return np.kron(U, U.conj())


def _pure_vec(index):
    rho = np.zeros((3, 3), dtype=complex)
    rho[index, index] = 1.0
    return rho.reshape(-1)


def _read(vec, level) -> np.ndarray:
    i = LEVEL_INDEX[level]
    return np.real(vec[..., i * 3 + i])


def execute_density(seq: PulseSequence, f: NVFrequencies, d: DriveSettings, taus,
                    collapse: Sequence = (), dt_max: Optional[float] = None) -> np.ndarray:
    """Density-matrix execution with Lindblad free evolution and unitary pulses."""
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    H = build_h0(f)
    sym = _free_superops(H, collapse, taus, dt_max)
    vec = np.broadcast_to(_pure_vec(ZERO), (taus.size, 9)).copy()
    for step in seq.body:
        if isinstance(step, Pulse):
            vec = vec @ _unitary_superop(_pulse_matrix(step, f, d, True)).T
        elif isinstance(step, Free):
            if step.symbolic:
                vec = np.einsum("nij,nj->ni", sym, vec)
            else:
                fixed = _free_superops(H, collapse, [step.duration], dt_max)[0]
                vec = vec @ fixed.T
    return _read(vec, seq.read_level)


# ------------------------------------------------------ field trajectories

_DOMAIN_FIELDS = 2


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for trajectory ``index`` of a run seeded with ``seed``."""
    return stream(seed, index, _DOMAIN_FIELDS)


@dataclass(frozen=True)
class FieldTrajectory:
    """Piecewise-constant field: ``values[k]`` holds on ``[k*dt, (k+1)*dt)``."""

    dt: float
    values: np.ndarray

    def at(self, t) -> np.ndarray:
        k = np.minimum((np.asarray(t) / self.dt).astype(int), len(self.values) - 1)
        return self.values[k]

    @property
    def duration(self) -> float:
        return self.dt * len(self.values)


def _n_intervals(duration, dt):
    return max(1, int(math.ceil(duration / dt - 1e-9)))


def sample_field_trajectory(noise: NoiseModel, duration: float, seed: int = None,
                            index: int = 0) -> FieldTrajectory:
    """Field components drawn i.i.d. from N(mean, std^2) on every ``resample_dt`` interval."""
    seed = noise.seed if seed is None else seed
    n = _n_intervals(duration, noise.resample_dt)
    mean = noise.mean_vector
    if noise.field_std == 0:
        return FieldTrajectory(noise.resample_dt, np.broadcast_to(mean, (n, 3)).copy())
    rng = trajectory_rng(seed, index)
    return FieldTrajectory(noise.resample_dt, rng.normal(mean, noise.field_std, size=(n, 3)))


def _field_freqs(E, constants):
    xi_perp = TWO_PI * constants.d_perp * np.hypot(E[..., 0], E[..., 1])
    phi = np.arctan2(E[..., 1], E[..., 0])
    xi_z = TWO_PI * constants.d_par * E[..., 2]
    return xi_perp, phi, xi_z


def _breakpoints(dt, horizon, extra):
    n = _n_intervals(horizon, dt)
    grid = np.arange(n + 1) * dt
    pts = np.unique(np.concatenate([grid[grid <= horizon * (1 + 1e-12)], np.asarray(extra, float)]))
    # merge points closer than a femtosecond so rounding does not create empty segments
    keep = np.concatenate([[True], np.diff(pts) > 1e-15])
    return pts[keep]


def _segment_interval(t0, dt):
    return int(math.floor(t0 / dt + 1e-9))


# -------------------------------------------------------------- FID with dephasing

def fid_with_dephasing(seq: PulseSequence, f: NVFrequencies, d: DriveSettings,
                       noise: NoiseModel, taus, constants: NVConstants = DEFAULT_CONSTANTS,
                       dt_max: Optional[float] = None) -> SignalTrace:
    """Run ``seq`` with Lindblad dephasing during free evolution; pulses stay unitary.

    If ``noise.field_std > 0`` the electric-field part of ``f`` is replaced by
    fluctuating fields (mean ``noise.field_mean``) and the signal is averaged
    over ``noise.trajectories`` trajectories; this path supports sequences with
    a single swept free-evolution step.
    """
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    if np.any(taus < 0):
        raise ValueError("tau values must be >= 0")
    collapse = dephasing_operators(noise.t2_star)
    meta = {"sequence": seq.name, "t2_star": noise.t2_star, "omega": d.omega}
    if noise.field_std == 0:
        signal = execute_density(seq, f, d, taus, collapse, dt_max)
        return SignalTrace(taus, np.clip(signal, 0, 1), metadata=meta)
    signals = _fid_fluctuating(seq, f, d, noise, taus, collapse, constants, dt_max)
    meta.update(trajectories=noise.trajectories, field_std=noise.field_std)
    mean = signals.mean(axis=0)
    err = signals.std(axis=0, ddof=1) / math.sqrt(len(signals)) if len(signals) > 1 else np.zeros_like(mean)
    return SignalTrace(taus, np.clip(mean, 0, 1), stderr=err, metadata=meta)


def _fid_fluctuating(seq, f, d, noise, taus, collapse, constants, dt_max):
    body = seq.body
    free_idx = [i for i, s in enumerate(body) if isinstance(s, Free)]
    if len(free_idx) != 1 or not body[free_idx[0]].symbolic:
        raise NotImplementedError("fluctuating fields need exactly one swept free step and no fixed ones")
    k = free_idx[0]
    pre = np.eye(9, dtype=complex)
    for step in body[:k]:
        pre = _unitary_superop(_pulse_matrix(step, f, d, True)) @ pre
    post = np.eye(9, dtype=complex)
    for step in body[k + 1:]:
        post = _unitary_superop(_pulse_matrix(step, f, d, True)) @ post
    order = np.argsort(taus, kind="stable")
    horizon = float(taus.max()) if taus.size else 0.0
    pts = _breakpoints(noise.resample_dt, max(horizon, noise.resample_dt), taus)
    want = {float(t): [] for t in taus}
    for i in order:
        want[float(taus[i])].append(i)
    n_int = _n_intervals(max(horizon, noise.resample_dt), noise.resample_dt)
    ntraj = noise.trajectories
    fields = np.stack([sample_field_trajectory(noise, n_int * noise.resample_dt, index=j).values
                       for j in range(ntraj)])
    xi_perp, phi, xi_z = _field_freqs(fields, constants)
    vec = np.broadcast_to(pre @ _pure_vec(ZERO), (ntraj, 9)).copy()
    out = np.empty((ntraj, taus.size))
    coll = list(collapse)
    rate_c = sum(float(np.linalg.norm(L.conj().T @ L, 2)) for L in coll)

    def record(t):
        for i in want.get(float(t), ()):
            out[:, i] = _read(vec @ post.T, seq.read_level)

    record(0.0)
    for a, b in zip(pts[:-1], pts[1:]):
        kint = min(_segment_interval(a, noise.resample_dt), n_int - 1)
        H = np.zeros((ntraj, 3, 3), dtype=complex)
        shift = f.delta + xi_z[:, kint]
        H[:, PLUS, PLUS] = shift + f.beta_z
        H[:, MINUS, MINUS] = shift - f.beta_z
        cpl = -xi_perp[:, kint] * np.exp(1j * phi[:, kint])
        H[:, PLUS, MINUS] = cpl
        H[:, MINUS, PLUS] = np.conj(cpl)
        rate = float(np.max(np.abs(shift)) + np.max(np.abs(f.beta_z) + xi_perp[:, kint])) * 2 + rate_c
        n = _substeps(b - a, rate, dt_max)
        lv = liouvillian(H, coll)
        step = np.linalg.matrix_power(_rk4_matrix(lv, (b - a) / n), n)
        vec = np.einsum("bij,bj->bi", step, vec)
        record(b)
    return out


# ------------------------------------------------------------- Hahn ensemble

def hahn_ensemble(noise: NoiseModel, d: DriveSettings, taus,
                  constants: NVConstants = DEFAULT_CONSTANTS, beta_z: float = 0.0,
                  chunk: int = 200, block: int = 2048, batches: int = 0) -> SignalTrace:
    """Trajectory-averaged Hahn signal under fluctuating electric fields.

    Pulses are ideal right-circular pi-pulses, so the signal of one trajectory
    is the product of the |+1> <-> |-1> flip probabilities accumulated in the
    two free-evolution intervals. The intrinsic coherence time relaxes each
    flip probability towards 1/2 with ``exp(-tau/t2_int)``.

    ``batches > 1`` adds ``metadata["batch_means"]``, the mean signal of that
    many contiguous trajectory blocks, for batch-means error estimates.
    """
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    if np.any(taus < 0):
        raise ValueError("tau values must be >= 0")
    if noise.trajectories < 100:
        warnings.warn("fewer than 100 trajectories; averaged trace is too noisy for fitting",
                      stacklevel=2)
    dt = noise.resample_dt
    horizon = max(2 * float(taus.max()), dt)
    n_int = _n_intervals(horizon, dt)
    pts = _breakpoints(dt, horizon, np.concatenate([taus, 2 * taus]))
    ntraj = noise.trajectories
    p1 = np.empty((ntraj, taus.size))
    p2 = np.empty((ntraj, taus.size))
    first = {}
    second = {}
    for i, t in enumerate(taus):
        first.setdefault(float(t), []).append(i)
        second.setdefault(float(2 * t), []).append(i)

    for lo in range(0, ntraj, chunk):
        hi = min(ntraj, lo + chunk)
        gens = [trajectory_rng(noise.seed, j) for j in range(lo, hi)]
        U = np.broadcast_to(np.eye(3, dtype=complex), (hi - lo, 3, 3)).copy()
        U_tau = np.empty((hi - lo, taus.size, 3, 3), dtype=complex)
        block_start = -1
        fields = None

        def mark(t):
            for i in first.get(float(t), ()):
                U_tau[:, i] = U
                p1[lo:hi, i] = np.abs(U[:, MINUS, PLUS]) ** 2
            for i in second.get(float(t), ()):
                V = U @ np.conj(np.swapaxes(U_tau[:, i], 1, 2))
                p2[lo:hi, i] = np.abs(V[:, PLUS, MINUS]) ** 2

        mark(0.0)
        for a, b in zip(pts[:-1], pts[1:]):
            k = min(_segment_interval(a, dt), n_int - 1)
            if fields is None or k >= block_start + block:
                block_start = (k // block) * block
                size = min(block, n_int - block_start)
                if noise.field_std > 0:
                    draws = np.stack([g.normal(0.0, 1.0, size=(size, 3)) for g in gens])
                    E = noise.mean_vector + noise.field_std * draws
                else:
                    E = np.broadcast_to(noise.mean_vector, (hi - lo, size, 3))
                fields = _field_freqs(E, constants)
            j = k - block_start
            xi_perp, phi, xi_z = (arr[:, j] for arr in fields)
            F = free_propagator_arrays(xi_z, beta_z, xi_perp, phi, b - a)
            U = F @ U
            mark(b)

    if noise.t2_int is not None:
        env = np.exp(-taus / noise.t2_int)
        p1 = 0.5 + (p1 - 0.5) * env
        p2 = 0.5 + (p2 - 0.5) * env
    signals = p1 * p2
    mean = signals.mean(axis=0)
    err = signals.std(axis=0, ddof=1) / math.sqrt(ntraj) if ntraj > 1 else np.zeros_like(mean)
    meta = {"sequence": "hahn", "trajectories": ntraj, "field_mean": noise.mean_vector.tolist(),
            "field_std": noise.field_std, "resample_dt": dt, "t2_int": noise.t2_int,
            "seed": noise.seed, "omega": d.omega}
    if batches > 1:
        meta["batch_means"] = np.stack([b.mean(axis=0) for b in np.array_split(signals, batches)])
    return SignalTrace(taus, np.clip(mean, 0, 1), stderr=err, metadata=meta)


def hahn_tau_grid(noise: NoiseModel, tau_max: float, constants: NVConstants = DEFAULT_CONSTANTS,
                  points_per_period: int = 8) -> np.ndarray:
    """Sweep on multiples of ``resample_dt`` resolving the 4*xi_perp harmonic."""
    e_perp = math.hypot(*noise.mean_vector[:2])
    f_top = 4 * constants.d_perp * max(e_perp, 1e-30)
    spacing = max(noise.resample_dt, 1.0 / (points_per_period * f_top))
    step = max(1, int(round(spacing / noise.resample_dt)))
    n = int(tau_max / (step * noise.resample_dt))
    return np.arange(n + 1) * step * noise.resample_dt


def t2_components(t2_total: float, t2_int: float) -> float:
    """Field-induced coherence time from ``1/T2 = 1/T2_int + 1/T2_E``.

    Returns ``inf`` when ``t2_total >= t2_int`` (no electric contribution).
    """
    if not (t2_total > 0 and t2_int > 0):
        raise ValueError("coherence times must be > 0")
    if t2_total >= t2_int:
        return math.inf
    return 1.0 / (1.0 / t2_total - 1.0 / t2_int)
