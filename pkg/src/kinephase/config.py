"""Experiment configuration read from and written to TOML.

Schema (every section and key optional; defaults shown)::

    sigmas = [0.0220970869, 0.03125, 0.0441941738, 0.0625, 0.0883883476]

    [model]
    L = 10.0
    alpha = 0.2
    gamma = 0.3333333333333333

    [noise]
    kind = "scalar"        # scalar | single_mode | gaussian | custom
    mode = 5               # single_mode only
    ell = 1.0              # gaussian only
    a_sq = [0.5, 0.5]      # custom only
    n_max = 19
    n_trunc = 10           # optional override of the reduction truncation
    h = "additive"         # additive | exp_u

    [solver]               # phase reduction
    nodes = 163
    cfl = 0.4
    T_s = 100.0
    decay_tol = 1e-8
    max_T_s = 800.0
    guard = 0.1            # horizon extension checked by the convergence guard
    guard_tol = 0.001

    [sim]                  # Monte Carlo
    nodes = 605
    dt = 0.001
    T = 64.0
    n_trials = 64
    n_modes = 20
    seed = 0
    record_stride = 1000

    [sweep]
    ell = [0.0, 0.5, 1.0, 2.0, 5.0, 10.0]
    L = [4.0, 6.0, 8.0, 10.0]

    [output]
    dir = "out"
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import tomli
import tomli_w

from .errors import ConfigError, InvalidSpec
from .model import ModelParams, NoiseProfileKind
from .noise import SIM_MODES, NoiseKind, NoiseSpec, build_noise_spec
from .phase import SolverConfig
from .spde import SimConfig

__all__ = [
    "NoiseConfig",
    "SimSettings",
    "SweepSettings",
    "ExperimentConfig",
    "DEFAULT_SIGMAS",
    "load_config",
    "parse_config",
    "dump_config",
]

DEFAULT_SIGMAS = (
    math.sqrt(2) / 64, 1 / 32, math.sqrt(2) / 32, 1 / 16, math.sqrt(2) / 16,
)


@dataclass(frozen=True)
class NoiseConfig:
    kind: NoiseKind = NoiseKind.SCALAR
    mode: int | None = None
    ell: float | None = None
    a_sq: tuple | None = None
    n_max: int = SIM_MODES - 1
    n_trunc: int | None = None
    h: NoiseProfileKind = NoiseProfileKind.ADDITIVE

    def build(self, params: ModelParams) -> NoiseSpec:
        """Normalized spec for domain ``params.L``."""
        param = {
            NoiseKind.SCALAR: None,
            NoiseKind.SINGLE_MODE: self.mode,
            NoiseKind.GAUSSIAN: self.ell,
            NoiseKind.CUSTOM: self.a_sq,
        }[self.kind]
        if self.kind is not NoiseKind.SCALAR and param is None:
            raise ConfigError(f"noise kind {self.kind.value!r} needs its parameter")
        try:
            spec = build_noise_spec(self.kind, params, self.n_max, param)
            return spec if self.n_trunc is None else spec.truncated(self.n_trunc)
        except InvalidSpec as exc:
            raise ConfigError(str(exc)) from None


@dataclass(frozen=True)
class SimSettings:
    nodes: int = 605
    dt: float = 1e-3
    T: float = 64.0
    n_trials: int = 64
    n_modes: int = SIM_MODES
    seed: int = 0
    record_stride: int = 1000

    def sim_config(self, sigma: float) -> SimConfig:
        return SimConfig(dt=self.dt, T=self.T, sigma=sigma, n_modes_sim=self.n_modes,
                         seed=self.seed, record_stride=self.record_stride)


@dataclass(frozen=True)
class SweepSettings:
    ell: tuple = (0.0, 0.5, 1.0, 2.0, 5.0, 10.0)
    L: tuple = (4.0, 6.0, 8.0, 10.0)


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelParams = field(default_factory=ModelParams)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    sigmas: tuple = DEFAULT_SIGMAS
    solver: SolverConfig = field(default_factory=SolverConfig)
    sim: SimSettings = field(default_factory=SimSettings)
    sweep: SweepSettings = field(default_factory=SweepSettings)
    out_dir: str = "out"

    def replace(self, **sections) -> "ExperimentConfig":
        return dataclasses.replace(self, **sections)

    def to_dict(self) -> dict:
        """Plain nested dict in the TOML layout (``None`` entries dropped)."""
        noise = {k: v for k, v in dataclasses.asdict(self.noise).items() if v is not None}
        noise["kind"] = self.noise.kind.value
        noise["h"] = self.noise.h.value
        if "a_sq" in noise:
            noise["a_sq"] = list(noise["a_sq"])
        solver = dataclasses.asdict(self.solver)
        solver.pop("workers")
        return {
            "sigmas": list(self.sigmas),
            "model": dataclasses.asdict(self.model),
            "noise": noise,
            "solver": solver,
            "sim": dataclasses.asdict(self.sim),
            "sweep": {"ell": list(self.sweep.ell), "L": list(self.sweep.L)},
            "output": {"dir": self.out_dir},
        }


# per-section key types: float, int, str, or list of floats
_SCHEMA = {
    "model": {"L": float, "alpha": float, "gamma": float},
    "noise": {"kind": str, "mode": int, "ell": float, "a_sq": list, "n_max": int,
              "n_trunc": int, "h": str},
    "solver": {"nodes": int, "cfl": float, "T_s": float, "decay_tol": float, "max_T_s": float,
               "guard": float, "guard_tol": float},
    "sim": {"nodes": int, "dt": float, "T": float, "n_trials": int, "n_modes": int, "seed": int,
            "record_stride": int},
    "sweep": {"ell": list, "L": list},
    "output": {"dir": str},
}


def _float_list(val, what) -> tuple:
    if not isinstance(val, list) or not all(
        isinstance(x, (int, float)) and not isinstance(x, bool) for x in val
    ):
        raise ConfigError(f"{what} must be a list of numbers")
    return tuple(float(x) for x in val)


def _section(data: dict, name: str) -> dict:
    sec = data.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"[{name}] must be a table")
    schema = _SCHEMA[name]
    unknown = set(sec) - set(schema)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(sorted(unknown))}")
    out = {}
    for key, val in sec.items():
        kind = schema[key]
        if kind is float:
            if isinstance(val, bool) or not isinstance(val, (int, float)):
                raise ConfigError(f"[{name}] {key} must be a number")
            val = float(val)
        elif kind is int:
            if isinstance(val, bool) or not isinstance(val, int):
                raise ConfigError(f"[{name}] {key} must be an integer")
        elif kind is str:
            if not isinstance(val, str):
                raise ConfigError(f"[{name}] {key} must be a string")
        else:
            val = _float_list(val, f"{name}.{key}")
        out[key] = val
    return out


def parse_config(data: dict) -> ExperimentConfig:
    """Validate a TOML-shaped dict.

    Raises
    ------
    ConfigError
        On unknown sections or keys, wrong types, or invalid values.
    """
    unknown = set(data) - set(_SCHEMA) - {"sigmas"}
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(sorted(unknown))}")
    try:
        model = ModelParams(**_section(data, "model"))
        noise_d = _section(data, "noise")
        if "kind" in noise_d:
            noise_d["kind"] = NoiseKind(noise_d["kind"])
        if "h" in noise_d:
            noise_d["h"] = NoiseProfileKind(noise_d["h"])
        noise = NoiseConfig(**noise_d)
        solver = SolverConfig(**_section(data, "solver"))
        sim = SimSettings(**_section(data, "sim"))
        sweep = SweepSettings(**_section(data, "sweep"))
        out_dir = _section(data, "output").get("dir", "out")
        sigmas = _float_list(data["sigmas"], "sigmas") if "sigmas" in data else DEFAULT_SIGMAS
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None

    if any(s < 0 for s in sigmas):
        raise ConfigError("sigmas must be non-negative")
    if sim.n_trials < 2 or sim.nodes < 64 or solver.nodes < 64:
        raise ConfigError("need n_trials >= 2 and at least 64 nodes")
    if not (sim.dt > 0 and sim.T > 0 and solver.T_s > 0 and solver.cfl > 0):
        raise ConfigError("time steps and horizons must be positive")
    if any(e < 0 for e in sweep.ell) or any(x <= 0 for x in sweep.L):
        raise ConfigError("sweep needs ell >= 0 and L > 0")
    if noise.kind is NoiseKind.CUSTOM and noise.a_sq is None:
        raise ConfigError("custom noise needs a_sq")
    cfg = ExperimentConfig(model, noise, sigmas, solver, sim, sweep, out_dir)
    noise.build(model)
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            data = tomli.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"malformed TOML in {path}: {exc}") from None
    return parse_config(data)


def dump_config(cfg: ExperimentConfig, path=None) -> str:
    """Serialize to TOML; also write it to ``path`` if given."""
    text = tomli_w.dumps(cfg.to_dict())
    if path is not None:
        Path(path).write_text(text)
    return text
