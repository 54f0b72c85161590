"""Run the figure-level experiments through the CLI with the shipped configs.

    python scripts/reproduce.py               # everything
    python scripts/reproduce.py fig2c figS2   # a subset
    python scripts/reproduce.py --list

Outputs land in ``out/<name>/`` (CSV, JSON, SVG).
"""
import argparse
import sys
import time
from pathlib import Path

from nvfield.cli import main as cli

ROOT = Path(__file__).resolve().parents[1]

# name -> (subcommand, config, extra flags, rough single-core runtime)
RUNS = {
    "fig1": ("field-stats", "fig1_field_stats.json", [], "15 s"),
    "fig2c": ("spectrum", "fig2c_spectrum.json", [], "2 s"),
    "figS1": ("fid", "figS1_fid.json", ["--ensemble"], "12 s"),
    "figS2": ("hahn", "figS2_hahn.json", [], "20 s"),
    "fig3b": ("fit-alpha", "fig3b_alpha.json", [], "4 min"),
    "dt_sweep": ("dt-sweep", "dt_sweep.json", [], "1 min"),
    "reconstruct": ("reconstruct", "reconstruct.json", [], "1 s"),
}


def run(name: str, out_root: Path, threads: int) -> int:
    cmd, cfg, extra, _ = RUNS[name]
    argv = [cmd, "--config", str(ROOT / "configs" / cfg), "--out", str(out_root / name),
            "--threads", str(threads), *extra]
    t0 = time.perf_counter()
    code = cli(argv)
    print(f"[{name}] exit {code} in {time.perf_counter() - t0:.1f} s", flush=True)
    return code


def main() -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("names", nargs="*", help="subset of runs (default: all)")
    p.add_argument("--out", default=str(ROOT / "out"))
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--list", action="store_true")
    args = p.parse_args()
    if args.list:
        for name, (cmd, cfg, extra, eta) in RUNS.items():
            print(f"{name:12s} nvfield {cmd} --config configs/{cfg} {' '.join(extra)}  (~{eta})")
        return 0
    unknown = set(args.names) - set(RUNS)
    if unknown:
        p.error(f"unknown runs: {sorted(unknown)}")
    codes = [run(n, Path(args.out), args.threads) for n in (args.names or RUNS)]
    return max(codes)


if __name__ == "__main__":
    sys.exit(main())
