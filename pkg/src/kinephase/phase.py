"""Reduced phase SDE ``d theta = sigma^2 mu dt + sigma sum_j S_j dW_j``.

For every retained noise direction the first and second variations are
integrated until their interface traces have decayed; trapezoidal quadratures
of those traces give the diffusion coefficients ``S_j`` and the drift
contributions ``R_k``. The coefficients do not depend on ``sigma``.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import NotDecayed
from .model import NoiseProfileKind
from .noise import Direction, NoiseSpec, directions
from .pulse import DEFAULT_NODES, PulseSolution
from .variation import DEFAULT_CFL, VariationTraces, default_dt, integrate_batch

__all__ = [
    "SolverConfig",
    "PhaseCoefficients",
    "diffusion_coefficient",
    "drift_contribution",
    "reduce",
    "predicted_stats",
    "predicted_mean_rate",
    "predicted_deviation",
]


@dataclass(frozen=True)
class SolverConfig:
    """Numerical settings of the reduction.

    Attributes
    ----------
    nodes : int
        Grid size used when the caller lets :func:`reduce` resample the pulse.
    cfl : float
        RK4 step as a fraction of ``min spacing / c0``.
    T_s : float
        Initial integration horizon; doubled up to ``max_T_s`` if needed.
    decay_tol : float
        Relative terminal size below which traces count as decayed.
    guard : float
        Fractional extension of the horizon used by the convergence guard.
    guard_tol : float
        Largest accepted change of any coefficient over the guard extension,
        relative to the largest coefficient of the same family.
    workers : int
        Process count for the per-direction solves; 1 runs in-process.
    """

    nodes: int = DEFAULT_NODES
    cfl: float = DEFAULT_CFL
    T_s: float = 100.0
    decay_tol: float = 1e-8
    max_T_s: float = 800.0
    guard: float = 0.1
    guard_tol: float = 1e-3
    workers: int = 1


@dataclass(frozen=True, eq=False)
class PhaseCoefficients:
    """Coefficients of the reduced phase process.

    ``S_diff[j]`` belongs to direction ``labels[j] = (k, parity)``; ``R`` maps
    each wavenumber to its drift contribution.
    """

    labels: tuple
    S_diff: np.ndarray
    R: dict
    S_drift: float
    nu_sq: float
    meta: dict = field(default_factory=dict)

    @property
    def mu(self) -> float:
        return self.S_drift

    def to_dict(self) -> dict:
        return {
            "S_diff": [
                {"k": k, "parity": parity, "value": float(s)}
                for (k, parity), s in zip(self.labels, self.S_diff)
            ],
            "R": {str(k): float(r) for k, r in self.R.items()},
            "S_drift": float(self.S_drift),
            "mu": float(self.mu),
            "nu_sq": float(self.nu_sq),
            "meta": dict(self.meta),
        }


def _require_decayed(*traces):
    for tr in traces:
        if tr is not None and not tr.decayed:
            raise NotDecayed(
                f"traces still at {tr.terminal_max():.3e} after T_s={tr.T_s:g}"
            )


def _trapezoid(y, dt):
    return float(np.trapezoid(y, dx=dt))


def _diffusion_integral(tr: VariationTraces, pulse: PulseSolution) -> float:
    return 0.5 * _trapezoid(
        pulse.c0_plus_prime * tr.v_plus - pulse.c0_minus_prime * tr.v_minus, tr.dt
    )


def _drift_integral(tr: VariationTraces, pulse: PulseSolution) -> float:
    integrand = (
        0.5 * pulse.c0_plus_dblprime * tr.v_plus**2
        - 0.5 * pulse.c0_minus_dblprime * tr.v_minus**2
        + pulse.c0_plus_prime * tr.nu_plus
        - pulse.c0_minus_prime * tr.nu_minus
    )
    return _trapezoid(integrand, tr.dt)


def diffusion_coefficient(traces: VariationTraces, pulse: PulseSolution, a_k: float) -> float:
    """``(a_k / 2) int (c'_+ v_+ - c'_- v_-) dt`` by the trapezoidal rule.

    Raises
    ------
    NotDecayed
        If the traces have not decayed.
    """
    _require_decayed(traces)
    return a_k * _diffusion_integral(traces, pulse)


def drift_contribution(traces_cos: VariationTraces, traces_sin: VariationTraces | None,
                       pulse: PulseSolution, a_k: float) -> float:
    """Drift contribution ``R_k`` of one wavenumber.

    ``a_k^2`` times the sum over the cos and (for ``k >= 1``) sin directions of
    ``int (c''_+ v_+^2 / 2 - c''_- v_-^2 / 2 + c'_+ nu_+ - c'_- nu_-) dt``.
    """
    _require_decayed(traces_cos, traces_sin)
    total = _drift_integral(traces_cos, pulse)
    if traces_sin is not None:
        total += _drift_integral(traces_sin, pulse)
    return a_k * a_k * total


def _solve_chunk(pulse, v0, T, dt, decay_tol, max_T_s, labels):
    return integrate_batch(pulse, v0, T, dt=dt, decay_tol=decay_tol,
                           max_T_s=max_T_s, labels=labels)


def _solve_all(pulse, dirs: list[Direction], config: SolverConfig):
    T = config.T_s * (1.0 + config.guard)
    dt = default_dt(pulse, config.cfl)
    max_T = config.max_T_s * (1.0 + config.guard)
    v0 = np.array([d.v0 for d in dirs])
    labels = [d.label for d in dirs]
    workers = max(1, min(config.workers, len(dirs)))
    if workers == 1:
        return _solve_chunk(pulse, v0, T, dt, config.decay_tol, max_T, labels)
    bounds = np.linspace(0, len(dirs), workers + 1).astype(int)
    with ProcessPoolExecutor(workers) as pool:
        futures = [
            pool.submit(_solve_chunk, pulse, v0[a:b], T, dt, config.decay_tol, max_T, labels[a:b])
            for a, b in zip(bounds[:-1], bounds[1:])
        ]
        # collected in direction order regardless of completion order
        return [tr for f in futures for tr in f.result()]


def _guard(full, head, name, labels, tol):
    full, head = np.asarray(full), np.asarray(head)
    scale = np.max(np.abs(full)) if full.size else 0.0
    if scale == 0.0:
        return
    change = np.abs(full - head) / scale
    worst = int(np.argmax(change))
    if change[worst] > tol:
        raise NotDecayed(
            f"{name} for {labels[worst]} changed by {change[worst]:.2e} (relative) "
            "over the guard interval"
        )


def reduce(pulse: PulseSolution, spec: NoiseSpec, h_kind=NoiseProfileKind.ADDITIVE,
           config: SolverConfig | None = None) -> PhaseCoefficients:
    """Phase coefficients for noise ``spec`` with amplitude profile ``h_kind``.

    The pulse is used on its own grid. Traces are integrated over
    ``(1 + guard) T_s`` and the quadratures are compared with those over the
    first ``T_s``; a relative change above ``guard_tol`` raises.

    Raises
    ------
    NotDecayed
        With the offending direction label, if decay or the guard fails.
    Instability
        If an RK4 solve blows up.
    """
    config = config or SolverConfig()
    dirs = directions(spec, pulse, h_kind)
    traces = _solve_all(pulse, dirs, config)
    for d, tr in zip(dirs, traces):
        if not tr.decayed:
            raise NotDecayed(f"direction {d.label} not decayed: terminal {tr.terminal_max():.3e} "
                             f"at T_s={tr.T_s:g}")

    n_full = traces[0].times.size - 1
    n_head = int(math.floor(n_full / (1.0 + config.guard) + 1e-9))
    labels = tuple(d.label for d in dirs)
    S_full = np.array([d.a * _diffusion_integral(tr, pulse) for d, tr in zip(dirs, traces)])
    S_head = np.array([d.a * _diffusion_integral(tr.head(n_head), pulse) for d, tr in zip(dirs, traces)])

    R_full, R_head = {}, {}
    for d, tr in zip(dirs, traces):
        w = d.a * d.a
        R_full[d.k] = R_full.get(d.k, 0.0) + w * _drift_integral(tr, pulse)
        R_head[d.k] = R_head.get(d.k, 0.0) + w * _drift_integral(tr.head(n_head), pulse)
    ks = list(R_full)
    _guard(S_full, S_head, "S", labels, config.guard_tol)
    _guard([R_full[k] for k in ks], [R_head[k] for k in ks], "R", ks, config.guard_tol)

    S_drift = 0.5 * math.fsum(R_full[k] for k in ks)
    return PhaseCoefficients(
        labels=labels,
        S_diff=S_full,
        R=R_full,
        S_drift=S_drift,
        nu_sq=float(np.sum(S_full**2)),
        meta={
            "noise": spec.label,
            "h": NoiseProfileKind(h_kind).value,
            "n_trunc": spec.n_trunc,
            "nodes": pulse.grid.size,
            "dt": traces[0].dt,
            "T_s": traces[0].T_s,
            "c0": pulse.c0,
            "rho_star": pulse.rho_star,
        },
    )


def predicted_stats(coeffs: PhaseCoefficients, sigma: float, t: float, theta0: float = 0.0):
    """Mean and variance of the reduced phase at time ``t``."""
    if t < 0 or sigma < 0:
        raise ValueError("t and sigma must be non-negative")
    s2 = sigma * sigma
    return s2 * coeffs.S_drift * t + theta0, t * s2 * coeffs.nu_sq


def predicted_mean_rate(coeffs: PhaseCoefficients, sigma: float) -> float:
    """Predicted drift of the phase velocity, ``sigma^2 mu``."""
    return sigma * sigma * coeffs.mu


def predicted_deviation(coeffs: PhaseCoefficients, sigma: float, T: float) -> float:
    """Predicted trial-to-trial deviation of ``(theta(T) - theta(0)) / T``."""
    return sigma * math.sqrt(coeffs.nu_sq / T)
