"""Strict JSON run configuration with unit-suffixed keys.

Every key carries its unit (``*_MHz``, ``*_V_per_um``, ``*_nm``, ``*_us``,
``*_ns``, ``*_mol_per_L``, ``*_G``) and is converted to SI on load. Unknown
keys are rejected.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from .constants import (DEFAULT_CONSTANTS, GAUSS, MHZ, MOL_PER_L, NM, NS, TWO_PI, US,
                        V_PER_UM, NVConstants)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PhysicsConfig:
    E: tuple = (10 * V_PER_UM, 10 * V_PER_UM, 10 * V_PER_UM)
    B_z: float = 0.0
    omega: float = TWO_PI * 10 * MHZ  # angular Rabi amplitude
    delta: float = 0.0  # angular detuning D - omega_d


@dataclass(frozen=True)
class ElectroConfig:
    eps_e: float = 17.5
    eps_nd: float = 5.8
    r_nd: float = 100 * NM
    R: float = 400 * NM
    trials: int = 500
    max_ions: Optional[int] = 20000


@dataclass(frozen=True)
class NoiseConfig:
    t2_star: Optional[float] = None
    t2_int: Optional[float] = 100 * US
    E_m: float = 1.0 * V_PER_UM
    sigma_E: float = 0.75 * V_PER_UM
    resample_dt: float = 10 * NS
    trajectories: int = 1000


@dataclass(frozen=True)
class SweepConfig:
    tau_max: Optional[float] = None
    tau_points: int = 1024
    c: tuple = (0.1 * MOL_PER_L, 0.25 * MOL_PER_L, 0.5 * MOL_PER_L, 1.0 * MOL_PER_L)
    E_m: tuple = (1 * V_PER_UM, 2 * V_PER_UM, 4 * V_PER_UM)
    sigma_E: tuple = (0.5 * V_PER_UM, 0.75 * V_PER_UM, 1.0 * V_PER_UM, 1.25 * V_PER_UM)
    resample_dt: tuple = (5 * NS, 10 * NS, 20 * NS, 40 * NS)


@dataclass(frozen=True)
class RunConfig:
    experiment: str = ""
    seed: int = 0
    output_dir: str = "out"
    sequence: str = ""
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    electrostatics: ElectroConfig = field(default_factory=ElectroConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    constants: NVConstants = DEFAULT_CONSTANTS


# key -> (attribute, SI scale, kind); kind is "num", "int", "opt" (nullable number),
# "optint", "vec3" or "list"
_SCHEMA = {
    "physics": (PhysicsConfig, {
        "E_V_per_um": ("E", V_PER_UM, "vec3"),
        "B_z_G": ("B_z", GAUSS, "num"),
        "omega_MHz": ("omega", TWO_PI * MHZ, "num"),
        "detuning_MHz": ("delta", TWO_PI * MHZ, "num"),
    }),
    "electrostatics": (ElectroConfig, {
        "eps_e": ("eps_e", 1.0, "num"),
        "eps_nd": ("eps_nd", 1.0, "num"),
        "r_nd_nm": ("r_nd", NM, "num"),
        "R_nm": ("R", NM, "num"),
        "trials": ("trials", 1, "int"),
        "max_ions": ("max_ions", 1, "optint"),
    }),
    "noise": (NoiseConfig, {
        "T2_star_us": ("t2_star", US, "opt"),
        "T2_int_us": ("t2_int", US, "opt"),
        "E_m_V_per_um": ("E_m", V_PER_UM, "num"),
        "sigma_E_V_per_um": ("sigma_E", V_PER_UM, "num"),
        "resample_dt_ns": ("resample_dt", NS, "num"),
        "trajectories": ("trajectories", 1, "int"),
    }),
    "sweep": (SweepConfig, {
        "tau_max_us": ("tau_max", US, "opt"),
        "tau_points": ("tau_points", 1, "int"),
        "c_mol_per_L": ("c", MOL_PER_L, "list"),
        "E_m_V_per_um": ("E_m", V_PER_UM, "list"),
        "sigma_E_V_per_um": ("sigma_E", V_PER_UM, "list"),
        "resample_dt_ns": ("resample_dt", NS, "list"),
    }),
}

_TOP = {"experiment", "seed", "output_dir", "sequence", "constants", *_SCHEMA}


def _number(block, key, value, allow_none=False):
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"{block}.{key}: expected a finite number, got {value!r}")
    return float(value)


def _convert(block, key, value, scale, kind):
    if kind == "num":
        return _number(block, key, value) * scale
    if kind == "opt":
        v = _number(block, key, value, allow_none=True)
        return None if v is None else v * scale
    if kind in ("int", "optint"):
        if value is None and kind == "optint":
            return None
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{block}.{key}: expected an integer, got {value!r}")
        return value
    if kind in ("vec3", "list"):
        if not isinstance(value, list):
            raise ConfigError(f"{block}.{key}: expected a list")
        out = tuple(_number(block, key, v) * scale for v in value)
        if kind == "vec3" and len(out) != 3:
            raise ConfigError(f"{block}.{key}: expected 3 components")
        return out
    raise AssertionError(kind)


def _block(name, data, base):
    cls, schema = _SCHEMA[name]
    if not isinstance(data, dict):
        raise ConfigError(f"{name}: expected an object")
    unknown = sorted(set(data) - set(schema))
    if unknown:
        raise ConfigError(f"{name}: unknown keys {unknown}")
    kwargs = {}
    for key, value in data.items():
        attr, scale, kind = schema[key]
        kwargs[attr] = _convert(name, key, value, scale, kind)
    return replace(base, **kwargs)


def _validate(cfg: RunConfig) -> None:
    p, e, n, s = cfg.physics, cfg.electrostatics, cfg.noise, cfg.sweep
    if not p.omega > 0:
        raise ConfigError("physics.omega_MHz must be > 0 (no drive)")
    if not (e.eps_e > 0 and e.eps_nd > 0):
        raise ConfigError("electrostatics: permittivities must be > 0")
    if not 0 < e.r_nd < e.R:
        raise ConfigError("electrostatics: need 0 < r_nd_nm < R_nm")
    if e.trials < 1:
        raise ConfigError("electrostatics.trials must be >= 1")
    if e.max_ions is not None and e.max_ions < 1:
        raise ConfigError("electrostatics.max_ions must be >= 1 or null")
    for name in ("t2_star", "t2_int"):
        v = getattr(n, name)
        if v is not None and not v > 0:
            raise ConfigError(f"noise.{name}: times must be > 0")
    if n.sigma_E < 0 or not n.resample_dt > 0 or n.trajectories < 1:
        raise ConfigError("noise: need sigma_E >= 0, resample_dt > 0, trajectories >= 1")
    if s.tau_max is not None and not s.tau_max > 0:
        raise ConfigError("sweep.tau_max_us must be > 0")
    if s.tau_points < 8:
        raise ConfigError("sweep.tau_points must be >= 8")
    if not s.c:
        raise ConfigError("sweep.c_mol_per_L must not be empty")
    if any(c <= 0 for c in s.c):
        raise ConfigError("sweep.c_mol_per_L values must be > 0")
    if any(v < 0 for v in s.sigma_E) or any(v <= 0 for v in s.resample_dt):
        raise ConfigError("sweep: sigma_E must be >= 0 and resample_dt > 0")
    if cfg.seed < 0 or cfg.seed >= 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = sorted(set(data) - _TOP)
    if unknown:
        raise ConfigError(f"unknown top-level keys {unknown}")
    cfg = RunConfig()
    kwargs = {}
    for key in ("experiment", "output_dir", "sequence"):
        if key in data:
            if not isinstance(data[key], str):
                raise ConfigError(f"{key}: expected a string")
            kwargs[key] = data[key]
    if "seed" in data:
        if isinstance(data["seed"], bool) or not isinstance(data["seed"], int):
            raise ConfigError("seed: expected an integer")
        kwargs["seed"] = data["seed"]
    for name in _SCHEMA:
        if name in data:
            kwargs[name] = _block(name, data[name], getattr(cfg, name))
    if "constants" in data:
        try:
            kwargs["constants"] = NVConstants.from_json(data["constants"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"constants: {exc}") from None
    cfg = replace(cfg, **kwargs)
    _validate(cfg)
    return cfg


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from None
    return config_from_dict(data)
