"""Euler-Maruyama simulation of the stochastic pulse in interface-fixing coordinates.

The state is ``(w_hat, theta, rho)``: the recovery field on the frozen pulse
grid, the unwrapped pulse position relative to the co-moving frame, and the
half-width. With ``c_+-`` the interface speeds ``c(w_hat(x_+-*))``,

    d w_hat = (A(w_hat, rho) D w_hat + g(w_hat)) dt + sigma h(w_hat) dW(x(xi, rho))
    d theta = ((c_+ - c_-) / 2 - c0) dt
    d rho   = (c_+ + c_-) / 2 dt

where ``A = (xi - x_-*) (c_+ + c_-) / (2 rho) - c_- rho_* / rho`` on E and
``(c_+ (L - 2 rho_*) - (xi - x_+*) (c_+ + c_-)) / (L - 2 rho)`` on R.

Trials are advanced together as rows of 2-d arrays. Every operation is
elementwise within a row, so a trial's trajectory does not depend on which
other trials share its batch.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import AllTrialsFailed, PulseCollapse
from .model import NoiseProfileKind
from .noise import SIM_MODES, NoiseSpec, mode_positions, noise_field
from .pulse import PulseSolution

__all__ = [
    "SimConfig",
    "SpdeState",
    "EnsembleStats",
    "trial_rng",
    "em_step",
    "simulate",
    "baseline_drift",
    "run_ensemble",
]

_RNG_BLOCK = 512


@dataclass(frozen=True)
class SimConfig:
    """Settings of one stochastic run.

    ``record_stride`` is the number of steps between stored ``theta`` samples.
    """

    dt: float = 1e-3
    T: float = 64.0
    sigma: float = 0.0
    n_modes_sim: int = SIM_MODES
    seed: int = 0
    record_stride: int = 1000

    def __post_init__(self):
        if not self.dt > 0 or not self.T > 0:
            raise ValueError("dt and T must be positive")
        if self.n_modes_sim < 1:
            raise ValueError("n_modes_sim must be at least 1")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if self.record_stride < 1:
            raise ValueError("record_stride must be at least 1")

    @property
    def n_steps(self) -> int:
        return max(1, round(self.T / self.dt))


@dataclass
class SpdeState:
    w_hat: np.ndarray
    theta: float
    rho: float

    @classmethod
    def stationary(cls, pulse: PulseSolution, theta: float = 0.0) -> "SpdeState":
        return cls(np.array(pulse.w_star, dtype=float), float(theta), pulse.rho_star)


@dataclass(frozen=True, eq=False)
class EnsembleStats:
    """Statistics of ``q = (theta(T) - theta(0)) / T`` over the surviving trials.

    ``trial_q`` holds every trial in index order with NaN for failed ones;
    ``q_values`` only the survivors.
    """

    trial_q: np.ndarray
    failed: np.ndarray
    q_values: np.ndarray
    mean: float
    median: float
    std_dev: float
    sem: float
    q0: float
    corrected_mean: float
    n_failed: int
    seed: int

    @property
    def n_trials(self) -> int:
        return self.trial_q.size


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Private stream of one trial, derived from ``(seed, trial)``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(trial,)))


class _Kernel:
    """Precomputed per-node fields for the batched step."""

    def __init__(self, pulse: PulseSolution, spec: NoiseSpec | None, h_kind, n_modes: int):
        grid = pulse.grid
        self.pulse = pulse
        self.L = grid.L
        self.alpha = pulse.params.alpha
        self.decay = pulse.params.decay
        self.c0 = pulse.c0
        self.rho_star = pulse.rho_star
        self.width_star = grid.L - 2.0 * pulse.rho_star
        self.ip, self.im = grid.index_plus, grid.index_minus
        self.excited = grid.excited
        self.ramp = grid.ramp
        self.spacing = grid.spacing
        self.base = np.where(self.excited, 1.0, 0.0)
        self.rho_min = 4.0 * float(np.max(grid.spacing))
        self.h_kind = NoiseProfileKind(h_kind)
        self.a = np.zeros(1) if spec is None else np.array(spec.a[:n_modes])
        self.n_z = 2 * self.a.size
        self.needs_phase = bool(np.any(self.a[1:] != 0))

    def speed(self, w):
        y = self.alpha + w
        with np.errstate(invalid="ignore", divide="ignore"):
            return (1.0 - 2.0 * y) / np.sqrt(y * (1.0 - y))

    def step(self, w, theta, rho, z, sigma, dt):
        """Advance a batch; returns new arrays and a per-row collapse mask."""
        cp = self.speed(w[:, self.ip])
        cm = self.speed(w[:, self.im])
        total = cp + cm
        r = rho[:, None]
        coef = np.where(
            self.excited,
            self.ramp * (total[:, None] / (2.0 * r)) - cm[:, None] * (self.rho_star / r),
            (cp[:, None] * self.width_star - self.ramp * total[:, None]) / (self.L - 2.0 * r),
        )
        dw = np.empty_like(w)
        dw[:, :-1] = w[:, 1:] - w[:, :-1]
        dw[:, -1] = w[:, 0] - w[:, -1]
        dw /= self.spacing
        drift = coef * dw + (self.base - self.decay * w)
        w_new = w + dt * drift
        if sigma != 0.0:
            if self.needs_phase:
                phase = (2.0 * np.pi / self.L) * mode_positions(self.pulse.grid, rho, self.rho_star)
            else:
                phase = np.zeros_like(w)
            inc = (sigma * math.sqrt(dt)) * noise_field(self.a, phase, z)
            if self.h_kind is NoiseProfileKind.EXP_U:
                inc *= np.exp(self.base - w)
            w_new += inc
        theta_new = theta + dt * (0.5 * (cp - cm) - self.c0)
        rho_new = rho + dt * (0.5 * total)
        with np.errstate(invalid="ignore"):
            bad = ~(np.isfinite(total) & (rho_new > self.rho_min)
                    & (rho_new < 0.5 * self.L - self.rho_min))
        return w_new, theta_new, rho_new, bad


def em_step(state: SpdeState, pulse: PulseSolution, spec: NoiseSpec, h_kind,
            cfg: SimConfig, rng: np.random.Generator) -> SpdeState:
    """One Euler-Maruyama step of a single trial (Ito: noise at the pre-step state).

    Draws ``2 n_modes_sim`` normals from ``rng`` even when ``sigma = 0`` so
    the stream position does not depend on ``sigma``.

    Raises
    ------
    PulseCollapse
        If the half-width leaves its guard band or an interface value leaves
        the admissible band of the speed law.
    """
    kern = _Kernel(pulse, spec, h_kind, cfg.n_modes_sim)
    z = rng.standard_normal((1, kern.n_z))
    w, theta, rho, bad = kern.step(np.asarray(state.w_hat, float)[None], np.array([state.theta]),
                                   np.array([state.rho]), z, cfg.sigma, cfg.dt)
    if bad[0]:
        raise PulseCollapse(f"pulse collapsed (rho={rho[0]:.4g})")
    return SpdeState(w[0], float(theta[0]), float(rho[0]))


def simulate(pulse: PulseSolution, spec: NoiseSpec | None, h_kind, cfg: SimConfig, trials) -> tuple:
    """Run a batch of trials from ``(w_*, 0, rho_*)``.

    Parameters
    ----------
    trials : sequence of int
        Trial indices; trial ``i`` draws from ``trial_rng(cfg.seed, i)``.

    Returns
    -------
    theta_paths : ndarray, shape (len(trials), n_records)
        ``theta`` every ``record_stride`` steps, including 0 and the final step.
    failed : ndarray of bool
    """
    trials = list(trials)
    kern = _Kernel(pulse, spec, h_kind, cfg.n_modes_sim)
    batch = len(trials)
    n = cfg.n_steps
    noisy = cfg.sigma != 0.0 and spec is not None
    rngs = [trial_rng(cfg.seed, t) for t in trials] if noisy else []

    w = np.tile(np.asarray(pulse.w_star, float), (batch, 1))
    theta = np.zeros(batch)
    rho = np.full(batch, pulse.rho_star)
    failed = np.zeros(batch, dtype=bool)
    record_at = sorted(set(range(0, n + 1, cfg.record_stride)) | {n})
    paths = np.empty((batch, len(record_at)))
    paths[:, 0] = 0.0
    slot = 1
    z_block = None
    for i in range(n):
        j = i % _RNG_BLOCK
        if noisy and j == 0:
            size = min(_RNG_BLOCK, n - i)
            z_block = np.stack([g.standard_normal((size, kern.n_z)) for g in rngs])
        z = z_block[:, j] if noisy else None
        w, theta, rho, bad = kern.step(w, theta, rho, z, cfg.sigma if noisy else 0.0, cfg.dt)
        newly = bad & ~failed
        if newly.any():
            failed |= newly
            # park collapsed rows on the stationary state so they stay finite
            w[newly] = pulse.w_star
            rho[newly] = pulse.rho_star
        if slot < len(record_at) and record_at[slot] == i + 1:
            paths[:, slot] = theta
            slot += 1
    paths[failed] = np.nan
    return paths, failed


def baseline_drift(pulse: PulseSolution, cfg: SimConfig) -> float:
    """Drift ``q0 = (theta(T) - theta(0)) / T`` of the noiseless run on this grid."""
    paths, failed = simulate(pulse, None, NoiseProfileKind.ADDITIVE, cfg, [0])
    if failed[0]:
        raise PulseCollapse("noiseless run collapsed")
    return float(paths[0, -1]) / (cfg.n_steps * cfg.dt)


def _final_q(pulse, spec, h_kind, cfg, trials):
    paths, failed = simulate(pulse, spec, h_kind, cfg, trials)
    return paths[:, -1] / (cfg.n_steps * cfg.dt), failed


def _shifted_stats(q):
    # deviations from the first value keep identical inputs exactly zero
    x0 = q[0]
    d = q - x0
    n = q.size
    mean = x0 + math.fsum(d) / n
    if n > 1:
        dm = math.fsum(d) / n
        var = math.fsum((d - dm) ** 2) / (n - 1)
    else:
        var = 0.0
    return mean, math.sqrt(var)


def run_ensemble(pulse: PulseSolution, spec: NoiseSpec, h_kind, cfg: SimConfig, n_trials: int,
                 workers: int = 1, chunk: int = 64, q0: float | None = None) -> EnsembleStats:
    """Independent trials from ``(w_*, 0, rho_*)`` and their drift statistics.

    Parameters
    ----------
    workers : int
        Process count; results are identical for any value.
    chunk : int
        Trials advanced together per batch.
    q0 : float, optional
        Precomputed baseline drift for this pulse grid and ``cfg``.

    Raises
    ------
    AllTrialsFailed
        If no trial survives.
    """
    if n_trials < 2:
        raise ValueError("need at least 2 trials")
    if q0 is None:
        q0 = baseline_drift(pulse, cfg)
    groups = [list(range(a, min(a + chunk, n_trials))) for a in range(0, n_trials, chunk)]
    if workers > 1 and len(groups) > 1:
        with ProcessPoolExecutor(min(workers, len(groups))) as pool:
            parts = list(pool.map(_final_q, *zip(*[(pulse, spec, h_kind, cfg, g) for g in groups])))
    else:
        parts = [_final_q(pulse, spec, h_kind, cfg, g) for g in groups]
    trial_q = np.concatenate([p[0] for p in parts])
    failed = np.concatenate([p[1] for p in parts])
    q = trial_q[~failed]
    if q.size == 0:
        raise AllTrialsFailed(f"all {n_trials} trials collapsed at sigma={cfg.sigma}")
    mean, std = _shifted_stats(q)
    return EnsembleStats(
        trial_q=trial_q,
        failed=failed,
        q_values=q,
        mean=mean,
        median=float(np.median(q)),
        std_dev=std,
        sem=std / math.sqrt(q.size),
        q0=q0,
        corrected_mean=mean - q0,
        n_failed=int(failed.sum()),
        seed=cfg.seed,
    )
