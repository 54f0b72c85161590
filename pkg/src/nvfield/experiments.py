"""Figure-level pipelines shared by the CLI, scripts and acceptance tests."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .constants import DEFAULT_CONSTANTS, NVConstants, TWO_PI
from .electrostatics import DielectricConfig, field_stats_mc, fit_sqrt_law
from .open_system import NoiseModel, hahn_ensemble, hahn_tau_grid, t2_components
from .pulse_engine import SignalTrace
from .spectral import FitResult, fit_alpha, fit_hahn_decay, r_squared
from .spin import DriveSettings

HAHN_TAU_MAX = 150e-6


def point_seed(master: int, index: int) -> int:
    """Independent 64-bit seed for grid point ``index``."""
    return int(np.random.SeedSequence([int(master), int(index)]).generate_state(1, np.uint64)[0])


def parallel_map(fn, items: Sequence, threads: int = 1) -> list:
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ----------------------------------------------------------- electrostatics

@dataclass
class FieldStatsRow:
    c: float
    std: np.ndarray
    mean: np.ndarray
    n_ions: int
    n_summed: int


def _stats_task(args):
    c, cfg, trials, seed, max_ions, series = args
    st = field_stats_mc(c, cfg, trials, seed=seed, max_ions=max_ions, series=series)
    return FieldStatsRow(c, st.std, st.mean, st.n_ions, st.n_summed)


def field_stats_grid(cs, cfg: DielectricConfig, trials: int, seed: int = 0,
                     max_ions: Optional[int] = 20000, threads: int = 1):
    """Monte Carlo sigma(c) over a concentration grid and the fitted ``A``."""
    tasks = [(c, cfg, trials, seed, max_ions, i) for i, c in enumerate(cs)]
    rows = parallel_map(_stats_task, tasks, threads)
    fit = fit_sqrt_law([(r.c, r.std[2]) for r in rows], cfg) if len(rows) >= 2 else None
    return rows, fit


# -------------------------------------------------------------------- Hahn

@dataclass
class HahnPoint:
    E_m: float
    sigma_E: float
    trace: SignalTrace
    fit: FitResult
    T2: float
    T2_err: float
    T2_E: float
    T2_E_err: float
    T2_err_fit: float = math.nan


def hahn_point(E_m: float, sigma_E: float, trajectories: int = 1000, seed: int = 0,
               t2_int: Optional[float] = 100e-6, resample_dt: float = 10e-9,
               omega: float = TWO_PI * 10e6, tau_max: float = HAHN_TAU_MAX,
               constants: NVConstants = DEFAULT_CONSTANTS, batches: int = 10) -> HahnPoint:
    """Averaged Hahn trace for one ``(E_m, sigma_E)`` pair and its fitted coherence times.

    All delays share the same trajectories, so the least-squares stderr of
    ``T2`` ignores the correlated Monte Carlo noise. With ``batches > 1`` the
    reported ``T2_err`` is the batch-means error: the spread of ``T2`` fitted
    to each block of trajectories, divided by ``sqrt(batches)``. The
    least-squares value is kept in ``T2_err_fit``.
    """
    noise = NoiseModel(t2_int=t2_int, field_mean=E_m, field_std=sigma_E,
                       resample_dt=resample_dt, trajectories=trajectories, seed=seed)
    taus = hahn_tau_grid(noise, tau_max, constants)
    use_batches = batches > 1 and trajectories >= 2 * batches
    trace = hahn_ensemble(noise, DriveSettings(omega), taus, constants,
                          batches=batches if use_batches else 0)
    xi_guess = TWO_PI * constants.d_perp * math.sqrt(2) * E_m
    fit = fit_hahn_decay(trace, xi_perp_guess=xi_guess)
    t2, t2_err_fit = fit.params["T2"], fit.stderr["T2"]
    t2_err = t2_err_fit
    block_means = trace.metadata.pop("batch_means", None)
    if block_means is not None:
        t2_b = []
        for y in block_means:
            fb = fit_hahn_decay(SignalTrace(taus, np.clip(y, 0, 1)), xi_perp_guess=xi_guess)
            if fb.converged:
                t2_b.append(fb.params["T2"])
        if len(t2_b) >= 2:
            t2_err = max(t2_err_fit, float(np.std(t2_b, ddof=1)) / math.sqrt(len(t2_b)))
    if t2_int is None:
        t2e, t2e_err = t2, t2_err
    else:
        t2e = t2_components(t2, t2_int) if t2 > 0 else math.nan
        # d T2_E / d T2 = (T2_E / T2)^2
        t2e_err = (t2e / t2) ** 2 * t2_err if math.isfinite(t2e) else math.nan
    return HahnPoint(E_m, sigma_E, trace, fit, t2, t2_err, t2e, t2e_err, t2_err_fit)


def _hahn_task(args):
    return hahn_point(**args)


def hahn_grid(E_ms, sigmas, trajectories=1000, seed=0, threads=1, **kw) -> list:
    tasks = []
    for i, (em, sg) in enumerate((em, sg) for em in E_ms for sg in sigmas):
        tasks.append(dict(E_m=em, sigma_E=sg, trajectories=trajectories,
                          seed=point_seed(seed, i), **kw))
    return parallel_map(_hahn_task, tasks, threads)


@dataclass
class AlphaSummary:
    per_curve: dict  # E_m -> FitResult
    global_fit: FitResult
    r2_per_curve: float
    r2_global: float


def alpha_summary(points: Sequence[HahnPoint]) -> AlphaSummary:
    """Fit ``T2_E = alpha E_m / sigma^2`` once per ``E_m`` curve and once globally.

    ``r2_per_curve`` is evaluated on all ``T2_E`` values with each curve's
    own ``alpha``.
    """
    usable = [p for p in points if math.isfinite(p.T2_E)]
    triples = [(p.E_m, p.sigma_E, p.T2_E) for p in usable]
    global_fit = fit_alpha(triples)
    per_curve = {}
    pred = []
    obs = []
    for em in sorted({p.E_m for p in usable}):
        sub = [t for t in triples if t[0] == em]
        fit = fit_alpha(sub)
        per_curve[em] = fit
        for e, s, t in sub:
            obs.append(t)
            pred.append(fit.params["alpha"] * e / s ** 2)
    return AlphaSummary(per_curve, global_fit, r_squared(obs, pred), global_fit.diagnostics["r2"])


def dt_sweep(dts, E_m=1e6, sigma_E=0.75e6, trajectories=300, seed=0, threads=1, **kw) -> list:
    tasks = [dict(E_m=E_m, sigma_E=sigma_E, trajectories=trajectories, resample_dt=dt,
                  seed=point_seed(seed, i), **kw) for i, dt in enumerate(dts)]
    return parallel_map(_hahn_task, tasks, threads)
