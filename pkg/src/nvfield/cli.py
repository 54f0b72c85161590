"""Command-line front end: ``nvfield <subcommand> [--config cfg.json] [--out dir]``.

Exit codes: 0 success, 1 runtime failure (including unresolvable spectral
lines, after partial results are written), 2 configuration error.
"""
from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .constants import MOL_PER_L, TWO_PI, US, V_PER_UM
from .dsl import BUILTIN, SequenceSyntaxError, builtin, parse_sequence
from .electrostatics import DielectricConfig, coefficient_A, sigma_closed_form
from .experiments import (HAHN_TAU_MAX, alpha_summary, dt_sweep, field_stats_grid, hahn_grid,
                          hahn_point)
from .io import write_csv, write_json
from .open_system import NoiseModel, fid_with_dephasing
from .pulse_engine import execute
from .reconstruct import ProtocolSettings, run_protocol
from .spectral import find_peaks, fit_fid_frequency, hahn_model, resolvable, spectrum
from .spin import DriveSettings, field_to_frequencies
from .svg import line_chart

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


# ----------------------------------------------------------------- helpers

def _dielectric(cfg: RunConfig, R=None) -> DielectricConfig:
    e = cfg.electrostatics
    return DielectricConfig(e.eps_e, e.eps_nd, e.r_nd, e.R if R is None else R)


def _frequencies(cfg: RunConfig):
    p, k = cfg.physics, cfg.constants
    return field_to_frequencies(p.E, B_z=p.B_z, omega_d=TWO_PI * k.D - p.delta, constants=k)


def _sequence(cfg: RunConfig, override: str, default: str):
    text = override or cfg.sequence or default
    if text in BUILTIN:
        return builtin(text)
    path = Path(text)
    if path.is_file():
        return parse_sequence(path.read_text(encoding="utf-8"), name=path.stem)
    if ";" in text:
        return parse_sequence(text, name="custom")
    raise ConfigError(f"sequence {text!r} is neither a built-in ({sorted(BUILTIN)}) nor a file")


def _tau_grid(cfg: RunConfig, f, default_max=None) -> np.ndarray:
    """Uniform sweep; sampling is refined so the fastest line is resolved 8x per period."""
    top = (2 * f.x + abs(f.xi_z) + abs(f.delta)) / TWO_PI
    slow = f.x / math.pi if f.x > 0 else 1e6
    tau_max = cfg.sweep.tau_max or default_max or 8.0 / slow
    n = max(cfg.sweep.tau_points, int(math.ceil(tau_max * 8 * top)) + 1)
    return np.linspace(0.0, tau_max, n)


def _noise(cfg: RunConfig, **kw) -> NoiseModel:
    n = cfg.noise
    base = dict(t2_star=n.t2_star, t2_int=n.t2_int, field_mean=n.E_m, field_std=n.sigma_E,
                resample_dt=n.resample_dt, trajectories=n.trajectories, seed=cfg.seed)
    base.update(kw)
    return NoiseModel(**base)


def _trace_csv(path, trace):
    if trace.stderr is not None:
        return write_csv(path, ["tau_us", "mean_signal", "stderr"],
                         [trace.tau / US, trace.signal, trace.stderr])
    return write_csv(path, ["tau_us", "signal"], [trace.tau / US, trace.signal])


def _run_sequence(cfg, seq, f, taus, ensemble: bool):
    d = DriveSettings(cfg.physics.omega)
    if ensemble:
        noise = _noise(cfg, field_std=cfg.noise.sigma_E)
        # fluctuating fields replace the configured mean field
        return fid_with_dephasing(seq, f, d, noise, taus, cfg.constants)
    if cfg.noise.t2_star is not None:
        return fid_with_dephasing(seq, f, d, _noise(cfg, field_std=0.0), taus, cfg.constants)
    return execute(seq, f, d, taus)


# ------------------------------------------------------------- subcommands

def cmd_field_stats(cfg: RunConfig, out: Path, args) -> int:
    e = cfg.electrostatics
    diel = _dielectric(cfg)
    cs = cfg.sweep.c
    summary = {"trials": e.trials, "max_ions": e.max_ions, "A_theory": coefficient_A(diel),
               "sigma_ratio_R500_over_R400": sigma_closed_form(1.0, _dielectric(cfg, 500e-9))
               / sigma_closed_form(1.0, _dielectric(cfg, 400e-9))}
    if e.trials < 2:
        stds = np.full((len(cs), 3), math.nan)
        summary.update(unusable_statistics=True, A_fit=None, A_fit_stderr=None)
        print("warning: trials < 2, standard deviations are undefined", file=sys.stderr)
    else:
        rows, fit = field_stats_grid(cs, diel, e.trials, cfg.seed, e.max_ions, args.threads)
        stds = np.array([r.std for r in rows])
        summary.update(unusable_statistics=False, A_fit=fit.params["A"],
                       A_fit_stderr=fit.stderr["A"],
                       A_ratio=fit.params["A"] / summary["A_theory"],
                       n_ions=[r.n_ions for r in rows], n_summed=[r.n_summed for r in rows])
    c_l = np.asarray(cs) / MOL_PER_L
    write_csv(out / "field_stats.csv", ["c_mol_per_L", "sigma_Ex", "sigma_Ey", "sigma_Ez"],
              [c_l, stds[:, 0], stds[:, 1], stds[:, 2]])
    write_json(out / "field_stats_fit.json", summary)
    grid = np.linspace(0, max(cs), 200)
    series = [("theory", grid / MOL_PER_L, sigma_closed_form(grid, diel) / V_PER_UM)]
    if summary.get("A_fit"):
        series.append(("fit", grid / MOL_PER_L,
                       summary["A_fit"] * np.sqrt(grid * diel.k) / V_PER_UM))
    line_chart(out / "field_stats.svg", series, "c (mol/L)", "sigma_Ez (V/um)",
               "field fluctuations", markers=[("Monte Carlo", c_l, stds[:, 2] / V_PER_UM)])
    if summary.get("A_fit"):
        print(f"A_fit = {summary['A_fit']:.4g} +/- {summary['A_fit_stderr']:.2g}, "
              f"A_theory = {summary['A_theory']:.4g}, ratio = {summary['A_ratio']:.4f}")
    return EXIT_OK


def cmd_fid(cfg: RunConfig, out: Path, args) -> int:
    seq = _sequence(cfg, args.sequence, "fid_xi_perp")
    f = _frequencies(cfg)
    ensemble = bool(args.ensemble)
    taus = _tau_grid(cfg, f)
    trace = _run_sequence(cfg, seq, f, taus, ensemble)
    _trace_csv(out / "fid_trace.csv", trace)
    summary = {"sequence": seq.name, "points": len(trace), "ensemble": ensemble,
               "t2_star_us": None if cfg.noise.t2_star is None else cfg.noise.t2_star / US,
               "tail_mean": float(trace.signal[-max(1, len(trace) // 10):].mean())}
    if seq.name == "fid_xi_perp":
        fit = fit_fid_frequency(trace)
        summary["frequency_fit"] = fit.to_json()
        if fit.converged:
            summary["x_over_2pi_MHz"] = fit.params["x"] / TWO_PI / 1e6
    write_json(out / "fid_summary.json", summary)
    line_chart(out / "fid_trace.svg", [(seq.name, trace.tau / US, trace.signal)],
               "tau (us)", "population", "free induction decay")
    print(f"wrote {len(trace)} points for {seq.name}")
    return EXIT_OK


def cmd_spectrum(cfg: RunConfig, out: Path, args) -> int:
    seq = _sequence(cfg, args.sequence, "fid_xi_z")
    f = _frequencies(cfg)
    taus = _tau_grid(cfg, f, default_max=200e-6)
    trace = _run_sequence(cfg, seq, f, taus, False)
    spec = spectrum(trace, pad=4)
    peaks = find_peaks(spec)
    _trace_csv(out / "spectrum_trace.csv", trace)
    write_csv(out / "spectrum.csv", ["freq_MHz", "amplitude"], [spec.freqs / 1e6, spec.amplitude])
    summary = {"sequence": seq.name, "resolution_MHz": spec.resolution / 1e6,
               "peaks": [{"freq_MHz": p.freq / 1e6, "amplitude": p.amplitude} for p in peaks]}
    status = EXIT_OK
    if seq.name == "fid_xi_z" and f.xi_z != 0 and f.xi_perp > 0:
        lo, hi = (f.xi_perp - abs(f.xi_z)) / TWO_PI, (f.xi_perp + abs(f.xi_z)) / TWO_PI
        ok = resolvable(spec, lo, hi)
        summary["xi_perp_pm_xi_z_resolvable"] = ok
        if not ok:
            status = EXIT_RUNTIME
            print("error: xi_perp +/- xi_z lines are not resolvable", file=sys.stderr)
    write_json(out / "spectrum_peaks.json", summary)
    band = spec.freqs < 2.5 * max((p.freq for p in peaks), default=spec.freqs[-1])
    line_chart(out / "spectrum.svg", [("|FFT|", spec.freqs[band] / 1e6, spec.amplitude[band])],
               "frequency (MHz)", "amplitude", f"spectrum of {seq.name}")
    print("freq_MHz   amplitude")
    for p in peaks:
        print(f"{p.freq / 1e6:9.4f}  {p.amplitude:10.4g}")
    return status


def _hahn_json(pt):
    data = pt.fit.to_json()
    data.update(T2_us=pt.T2 / US, T2_err_us=pt.T2_err / US, T2_E_us=pt.T2_E / US,
                T2_E_err_us=pt.T2_E_err / US, E_m_V_per_um=pt.E_m / V_PER_UM,
                sigma_E_V_per_um=pt.sigma_E / V_PER_UM, flags=pt.fit.diagnostics.get("flags", []),
                trajectories=pt.trace.metadata.get("trajectories"))
    return data


def cmd_hahn(cfg: RunConfig, out: Path, args) -> int:
    n = cfg.noise
    pt = hahn_point(n.E_m, n.sigma_E, n.trajectories, cfg.seed, n.t2_int, n.resample_dt,
                    cfg.physics.omega, cfg.sweep.tau_max or HAHN_TAU_MAX, cfg.constants)
    _trace_csv(out / "hahn_trace.csv", pt.trace)
    write_json(out / "hahn_fit.json", _hahn_json(pt))
    tau = pt.trace.tau
    series = [("ensemble", tau / US, pt.trace.signal)]
    if pt.fit.converged:
        series.append(("fit", tau / US, hahn_model(tau, pt.fit.params["xi_perp"], pt.T2)))
    line_chart(out / "hahn_trace.svg", series, "tau (us)", "population", "averaged Hahn echo")
    print(f"T2 = {pt.T2 / US:.3f} +/- {pt.T2_err / US:.3f} us, T2_E = {pt.T2_E / US:.3f} us")
    if not pt.fit.converged:
        print("error: Hahn fit did not converge", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_reconstruct(cfg: RunConfig, out: Path, args) -> int:
    settings = ProtocolSettings(omega=cfg.physics.omega, t2_star=cfg.noise.t2_star)
    res = run_protocol(np.asarray(cfg.physics.E), settings, cfg.constants)
    data = res.to_json()
    data["E_true_V_per_um"] = [v / V_PER_UM for v in cfg.physics.E]
    write_json(out / "reconstruction.json", data)
    print(f"xi_perp/2pi = {res.xi_perp / TWO_PI / 1e6:.6f} MHz")
    print(f"phi_E       = {res.phi_e:.6f} rad (principal value; pi - phi_E is equivalent)")
    if res.xi_z_resolved:
        print(f"xi_z/2pi    = {res.xi_z / TWO_PI / 1e6:.6f} MHz")
    else:
        print(f"xi_z/2pi    unresolved, below ~{res.xi_z_bound / TWO_PI / 1e6:.4f} MHz")
    print("E (V/um)    = " + ", ".join(f"{v / V_PER_UM:.6g}" for v in res.field))
    if not res.xi_z_resolved:
        print("error: xi_z lines are not resolvable", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_fit_alpha(cfg: RunConfig, out: Path, args) -> int:
    n, s = cfg.noise, cfg.sweep
    pts = hahn_grid(s.E_m, s.sigma_E, n.trajectories, cfg.seed, args.threads, t2_int=n.t2_int,
                    resample_dt=n.resample_dt, omega=cfg.physics.omega,
                    tau_max=s.tau_max or HAHN_TAU_MAX, constants=cfg.constants)
    write_csv(out / "alpha_points.csv",
              ["E_m_V_per_um", "sigma_E_V_per_um", "T2_us", "T2_err_us", "T2_E_us", "T2_E_err_us"],
              [[p.E_m / V_PER_UM for p in pts], [p.sigma_E / V_PER_UM for p in pts],
               [p.T2 / US for p in pts], [p.T2_err / US for p in pts],
               [p.T2_E / US for p in pts], [p.T2_E_err / US for p in pts]])
    summ = alpha_summary(pts)
    # alpha in SI (s V/m); also in us (V/um)^-1 * (V/um)^2 = us V/um
    unit = US * V_PER_UM
    write_json(out / "alpha_fit.json", {
        "alpha_per_curve_us_V_per_um": {f"{k / V_PER_UM:g}": v.params["alpha"] / unit
                                        for k, v in summ.per_curve.items()},
        "alpha_per_curve_stderr": {f"{k / V_PER_UM:g}": v.stderr["alpha"] / unit
                                   for k, v in summ.per_curve.items()},
        "alpha_global_us_V_per_um": summ.global_fit.params["alpha"] / unit,
        "r2_per_curve": summ.r2_per_curve, "r2_global": summ.r2_global,
        "points": [_hahn_json(p) for p in pts]})
    grid = np.linspace(min(s.sigma_E), max(s.sigma_E), 100)
    series, markers = [], []
    for em, fit in summ.per_curve.items():
        t2e = fit.params["alpha"] * em / grid ** 2
        t2 = 1 / (1 / t2e + (1 / n.t2_int if n.t2_int else 0))
        series.append((f"E_m={em / V_PER_UM:g}", grid / V_PER_UM, t2 / US))
        sub = [p for p in pts if p.E_m == em]
        markers.append((f"sim {em / V_PER_UM:g}", [p.sigma_E / V_PER_UM for p in sub],
                        [p.T2 / US for p in sub]))
    line_chart(out / "alpha_fit.svg", series, "sigma_E (V/um)", "T2 (us)", "T2 vs sigma_E",
               markers)
    print(f"R2 (alpha per E_m curve) = {summ.r2_per_curve:.4f}; R2 (single alpha) = {summ.r2_global:.4f}")
    return EXIT_OK


def cmd_dt_sweep(cfg: RunConfig, out: Path, args) -> int:
    n = cfg.noise
    pts = dt_sweep(cfg.sweep.resample_dt, n.E_m, n.sigma_E, n.trajectories, cfg.seed,
                   args.threads, t2_int=n.t2_int, omega=cfg.physics.omega,
                   tau_max=cfg.sweep.tau_max or HAHN_TAU_MAX, constants=cfg.constants)
    dts = np.asarray(cfg.sweep.resample_dt)
    write_csv(out / "dt_sweep.csv", ["resample_dt_ns", "T2_us", "T2_err_us", "T2_E_us"],
              [dts * 1e9, [p.T2 / US for p in pts], [p.T2_err / US for p in pts],
               [p.T2_E / US for p in pts]])
    write_json(out / "dt_sweep.json", {"points": [dict(_hahn_json(p), resample_dt_ns=dt * 1e9)
                                                  for p, dt in zip(pts, dts)]})
    line_chart(out / "dt_sweep.svg", [("T2", dts * 1e9, [p.T2 / US for p in pts])],
               "resample_dt (ns)", "T2 (us)", "T2 vs field resampling interval")
    for p, dt in zip(pts, dts):
        print(f"dt = {dt * 1e9:6.1f} ns  T2 = {p.T2 / US:8.3f} us  T2_E = {p.T2_E / US:8.3f} us")
    return EXIT_OK


COMMANDS = {
    "field-stats": cmd_field_stats,
    "fid": cmd_fid,
    "hahn": cmd_hahn,
    "spectrum": cmd_spectrum,
    "reconstruct": cmd_reconstruct,
    "fit-alpha": cmd_fit_alpha,
    "dt-sweep": cmd_dt_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="JSON run configuration")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed (u64)")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                        help="worker processes for grid commands")
    parser = argparse.ArgumentParser(prog="nvfield", parents=[common],
                                     description="NV-centre electric-field sensing simulations")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name in ("fid", "spectrum"):
            p.add_argument("--sequence", default="",
                           help="built-in name, DSL file, or inline DSL text")
        if name == "fid":
            p.add_argument("--ensemble", action="store_true",
                           help="average over fluctuating fields from the noise block")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for key, default in (("config", None), ("seed", None), ("out", None), ("threads", 1)):
        if not hasattr(args, key):
            setattr(args, key, default)
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            cfg = replace(cfg, seed=args.seed)
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        out = Path(args.out or cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out, args)
    except (ConfigError, SequenceSyntaxError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - report and map to the runtime exit code
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
