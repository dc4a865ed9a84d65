"""Command-line entry point: ``kinephase {pulse,reduce,simulate,tables,sweep}``.

Every output file starts with ``#`` provenance lines holding the command, the
full configuration as canonical JSON, its SHA-256, and package versions.
Exit codes: 0 success, 2 configuration or usage error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import math
import platform
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, NoiseConfig, dump_config, load_config
from .errors import ConfigError, KinephaseError
from .model import ModelParams, Region
from .noise import NoiseKind
from .phase import PhaseCoefficients, predicted_deviation, predicted_mean_rate, reduce
from .pulse import solve_pulse
from .spde import baseline_drift, run_ensemble

__all__ = ["main", "SweepResult", "cmd_pulse", "cmd_reduce", "cmd_simulate", "cmd_tables", "cmd_sweep"]

log = logging.getLogger("kinephase")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def provenance(cfg: ExperimentConfig, command: str) -> list[str]:
    """Header lines identifying everything an output depends on."""
    body = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))
    return [
        f"kinephase {__version__} {command}",
        f"config: {body}",
        f"config_sha256: {hashlib.sha256(body.encode()).hexdigest()}",
        f"seed: {cfg.sim.seed}",
        f"versions: python {platform.python_version()}, numpy {np.__version__}",
    ]


def _write_lines(fh, lines):
    for line in lines:
        fh.write(f"# {line}\n")


def _fmt(x) -> str:
    return repr(float(x))


def cmd_pulse(cfg: ExperimentConfig, out: Path) -> Path:
    pulse = solve_pulse(cfg.model, cfg.sim.nodes)
    path = out / "profile.csv"
    with open(path, "w", newline="") as fh:
        _write_lines(fh, provenance(cfg, "pulse") + [
            f"c0: {_fmt(pulse.c0)}",
            f"x_minus_star: {_fmt(pulse.x_minus_star)}",
            f"rho_star: {_fmt(pulse.rho_star)}",
        ])
        writer = csv.writer(fh)
        writer.writerow(["xi", "w_star", "region"])
        for xi, w, r in zip(pulse.grid.nodes, pulse.w_star, pulse.grid.region):
            writer.writerow([_fmt(xi), _fmt(w), Region(r).name])
    return path


def _coefficients(cfg: ExperimentConfig, model: ModelParams | None = None,
                  noise: NoiseConfig | None = None) -> PhaseCoefficients:
    model = model or cfg.model
    noise = noise or cfg.noise
    pulse = solve_pulse(model, cfg.solver.nodes)
    return reduce(pulse, noise.build(model), noise.h, cfg.solver)


def cmd_reduce(cfg: ExperimentConfig, out: Path) -> Path:
    coeffs = _coefficients(cfg)
    doc = {"provenance": provenance(cfg, "reduce"), **coeffs.to_dict()}
    path = out / "coeffs.json"
    path.write_text(json.dumps(doc, indent=2) + "\n")
    return path


def cmd_simulate(cfg: ExperimentConfig, out: Path, sigma: float | None = None) -> Path:
    sigma = cfg.sigmas[0] if sigma is None else sigma
    pulse = solve_pulse(cfg.model, cfg.sim.nodes)
    spec = cfg.noise.build(cfg.model)
    stats = run_ensemble(pulse, spec, cfg.noise.h, cfg.sim.sim_config(sigma),
                         cfg.sim.n_trials, workers=cfg.solver.workers)
    path = out / "ensemble.csv"
    with open(path, "w", newline="") as fh:
        _write_lines(fh, provenance(cfg, "simulate") + [f"sigma: {_fmt(sigma)}",
                                                        "trial rng: SeedSequence(seed, spawn_key=(trial,))"])
        writer = csv.writer(fh)
        writer.writerow(["trial", "seed", "q", "failed"])
        for i, (q, bad) in enumerate(zip(stats.trial_q, stats.failed)):
            writer.writerow([i, cfg.sim.seed, _fmt(q), int(bad)])
        _write_lines(fh, [
            f"mean: {_fmt(stats.mean)}",
            f"median: {_fmt(stats.median)}",
            f"std: {_fmt(stats.std_dev)}",
            f"sem: {_fmt(stats.sem)}",
            f"q0: {_fmt(stats.q0)}",
            f"corrected_mean: {_fmt(stats.corrected_mean)}",
            f"n_failed: {stats.n_failed}",
        ])
    return path


TABLE_COLUMNS = ["sigma", "empirical_median", "empirical_mean", "predicted_mean", "empirical_dev",
                 "predicted_dev", "sem", "q0", "n_failed", "warning"]


def fit_quadratic(sigmas, values) -> float:
    """Least-squares ``a`` in ``value = a sigma^2`` over finite entries."""
    s2 = np.asarray(sigmas, float) ** 2
    v = np.asarray(values, float)
    ok = np.isfinite(v)
    den = math.fsum(s2[ok] ** 2)
    return math.fsum(s2[ok] * v[ok]) / den if den > 0 else math.nan


def cmd_tables(cfg: ExperimentConfig, out: Path, predicted_only: bool = False) -> Path:
    if not cfg.sigmas:
        raise ConfigError("tables need a non-empty sigma list")
    coeffs = _coefficients(cfg)
    T = cfg.sim.T
    rows = []
    if not predicted_only:
        pulse = solve_pulse(cfg.model, cfg.sim.nodes)
        spec = cfg.noise.build(cfg.model)
        q0 = baseline_drift(pulse, cfg.sim.sim_config(0.0))
    for sigma in cfg.sigmas:
        row = dict.fromkeys(TABLE_COLUMNS, math.nan)
        row.update(sigma=sigma, predicted_mean=predicted_mean_rate(coeffs, sigma),
                   predicted_dev=predicted_deviation(coeffs, sigma, T), n_failed=0, warning="")
        if not predicted_only:
            try:
                st = run_ensemble(pulse, spec, cfg.noise.h, cfg.sim.sim_config(sigma),
                                  cfg.sim.n_trials, workers=cfg.solver.workers, q0=q0)
                row.update(empirical_median=st.median - q0, empirical_mean=st.corrected_mean,
                           empirical_dev=st.std_dev, sem=st.sem, q0=q0, n_failed=st.n_failed)
                if st.n_failed:
                    row["warning"] = f"{st.n_failed} trials collapsed"
            except KinephaseError as exc:
                log.warning("sigma=%g: %s", sigma, exc)
                row.update(q0=q0, warning=f"failed: {exc}")
        rows.append(row)

    fit_pred = fit_quadratic(cfg.sigmas, [r["predicted_mean"] for r in rows])
    fit_emp = fit_quadratic(cfg.sigmas, [r["empirical_mean"] for r in rows])
    path = out / "table.csv"
    with open(path, "w", newline="") as fh:
        _write_lines(fh, provenance(cfg, "tables") + [
            f"mu: {_fmt(coeffs.mu)}",
            f"nu_sq: {_fmt(coeffs.nu_sq)}",
            f"fit_a_predicted: {_fmt(fit_pred)}",
            f"fit_a_empirical: {_fmt(fit_emp)}",
        ])
        writer = csv.DictWriter(fh, TABLE_COLUMNS)
        writer.writeheader()
        for r in rows:
            writer.writerow({k: (_fmt(v) if isinstance(v, float) else v) for k, v in r.items()})
    return path


@dataclass(frozen=True, eq=False)
class SweepResult:
    """Drift rate ``mu`` per (ell, L) cell; failed cells hold NaN and a reason."""

    ell_grid: tuple
    L_grid: tuple
    mu_matrix: np.ndarray
    failures: dict

    def rows(self):
        for i, ell in enumerate(self.ell_grid):
            for j, L in enumerate(self.L_grid):
                yield ell, L, self.mu_matrix[i, j], self.failures.get((i, j), "")


def sweep(cfg: ExperimentConfig, ell_grid=None, L_grid=None) -> SweepResult:
    """``mu`` for Gaussian-correlated noise over a grid of ``ell`` and ``L``; ``ell = 0`` is scalar noise."""
    ell_grid = tuple(cfg.sweep.ell if ell_grid is None else ell_grid)
    L_grid = tuple(cfg.sweep.L if L_grid is None else L_grid)
    if not ell_grid or not L_grid:
        raise ConfigError("sweep grids must be non-empty")
    mu = np.full((len(ell_grid), len(L_grid)), np.nan)
    failures = {}
    for j, L in enumerate(L_grid):
        model = dataclasses.replace(cfg.model, L=L)
        for i, ell in enumerate(ell_grid):
            if ell == 0:
                noise = dataclasses.replace(cfg.noise, kind=NoiseKind.SCALAR, ell=None, mode=None,
                                            a_sq=None, n_trunc=None)
            else:
                noise = dataclasses.replace(cfg.noise, kind=NoiseKind.GAUSSIAN, ell=ell, mode=None,
                                            a_sq=None, n_trunc=None)
            try:
                mu[i, j] = _coefficients(cfg, model, noise).mu
            except KinephaseError as exc:
                failures[(i, j)] = f"{type(exc).__name__}: {exc}"
                log.warning("cell ell=%g L=%g failed: %s", ell, L, exc)
            log.info("ell=%g L=%g mu=%s", ell, L, mu[i, j])
    return SweepResult(ell_grid, L_grid, mu, failures)


def cmd_sweep(cfg: ExperimentConfig, out: Path, ell_grid=None, L_grid=None) -> tuple[SweepResult, Path]:
    result = sweep(cfg, ell_grid, L_grid)
    path = out / "sweep.csv"
    with open(path, "w", newline="") as fh:
        _write_lines(fh, provenance(cfg, "sweep"))
        writer = csv.writer(fh)
        writer.writerow(["ell", "L", "mu", "status"])
        for ell, L, mu, status in result.rows():
            writer.writerow([_fmt(ell), _fmt(L), _fmt(mu), status or "ok"])
    return result, path


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=argparse.SUPPRESS, help="TOML experiment config")
    common.add_argument("--out", type=Path, default=argparse.SUPPRESS, help="output directory")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="base RNG seed")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker processes")
    common.add_argument("--verbose", "-v", action="count", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="kinephase", parents=[common],
                                     description="Stochastic phase reduction of kinematic pulses.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pulse", parents=[common], help="solve and sample the stationary pulse")
    p.add_argument("--L", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--nodes", type=int)

    p = sub.add_parser("reduce", parents=[common], help="compute the phase coefficients")
    p.add_argument("--nodes", type=int)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo ensemble at one sigma")
    p.add_argument("--sigma", type=float)
    p.add_argument("--trials", type=int)
    p.add_argument("--T", type=float)

    p = sub.add_parser("tables", parents=[common], help="predicted vs empirical table over sigmas")
    p.add_argument("--sigmas", type=_float_list)
    p.add_argument("--predicted-only", action="store_true", help="skip the Monte Carlo columns")

    p = sub.add_parser("sweep", parents=[common], help="mu over an (ell, L) grid")
    p.add_argument("--ell", type=_float_list)
    p.add_argument("--L", type=_float_list)
    return parser


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    seed = getattr(args, "seed", None)
    threads = getattr(args, "threads", None)
    if seed is not None:
        if not 0 <= seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        cfg = cfg.replace(sim=dataclasses.replace(cfg.sim, seed=seed))
    if threads is not None:
        if threads < 1:
            raise ConfigError("--threads must be at least 1")
        cfg = cfg.replace(solver=dataclasses.replace(cfg.solver, workers=threads))
    if args.command == "pulse":
        model = {k: v for k, v in (("L", args.L), ("alpha", args.alpha), ("gamma", args.gamma)) if v is not None}
        try:
            cfg = cfg.replace(model=dataclasses.replace(cfg.model, **model))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if args.nodes is not None:
            cfg = cfg.replace(sim=dataclasses.replace(cfg.sim, nodes=args.nodes))
    elif args.command == "reduce" and args.nodes is not None:
        cfg = cfg.replace(solver=dataclasses.replace(cfg.solver, nodes=args.nodes))
    elif args.command == "simulate":
        sim = {k: v for k, v in (("n_trials", args.trials), ("T", args.T)) if v is not None}
        cfg = cfg.replace(sim=dataclasses.replace(cfg.sim, **sim))
        if args.sigma is not None:
            cfg = cfg.replace(sigmas=(args.sigma,))
    elif args.command == "tables" and args.sigmas is not None:
        cfg = cfg.replace(sigmas=tuple(args.sigmas))
    elif args.command == "sweep":
        if args.ell is not None:
            cfg = cfg.replace(sweep=dataclasses.replace(cfg.sweep, ell=tuple(args.ell)))
        if args.L is not None:
            cfg = cfg.replace(sweep=dataclasses.replace(cfg.sweep, L=tuple(args.L)))
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    verbose = getattr(args, "verbose", 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config_path = getattr(args, "config", None)
        cfg = load_config(config_path) if config_path else ExperimentConfig()
        cfg = _apply_overrides(cfg, args)
        out = Path(getattr(args, "out", None) or cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "pulse":
            path = cmd_pulse(cfg, out)
        elif args.command == "reduce":
            path = cmd_reduce(cfg, out)
        elif args.command == "simulate":
            path = cmd_simulate(cfg, out)
        elif args.command == "tables":
            path = cmd_tables(cfg, out, predicted_only=args.predicted_only)
        else:
            _, path = cmd_sweep(cfg, out)
        dump_config(cfg, out / f"{args.command}.config.toml")
    except ConfigError as exc:
        print(f"kinephase: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KinephaseError as exc:
        print(f"kinephase: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
