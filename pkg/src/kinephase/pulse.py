"""Stationary traveling pulse of the deterministic kinematic system.

In the co-moving frame the pulse solves ``0 = c0 w' + g(w)``. On each arc the
branch is affine, so the profile is an exact exponential relaxation toward the
branch root. With ``x_+* = 0`` (gauge) the profile is fixed by the two unknowns
``(x_-*, c0)``: the interface values follow from the matching conditions
``c(w(x_+*)) = c0`` and ``c(w(x_-*)) = -c0``, and Newton's method closes the
continuity mismatches at both interfaces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegeneratePulse, NoConvergence
from .model import (
    ModelParams,
    Region,
    branch_reaction,
    wave_speed,
    wave_speed_inverse,
    wrap,
)

__all__ = [
    "DEFAULT_NODES",
    "Grid",
    "PulseSolution",
    "build_grid",
    "continuity_residual",
    "solve_pulse",
    "pulse_residual",
]

# Spatial increment 0.0615 at L = 10.
DEFAULT_NODES = 163


@dataclass(frozen=True, eq=False)
class Grid:
    """Piecewise-uniform periodic grid with nodes on both interfaces.

    Attributes
    ----------
    L : float
        Domain length.
    nodes : ndarray
        Strictly increasing positions in ``[0, L)``.
    index_plus, index_minus : int
        Node indices of ``x_+*`` and ``x_-*``.
    region : ndarray of int8
        :class:`Region` code per node. Interface nodes carry the region of the
        interval to their right, where the forward difference looks.
    spacing : ndarray
        Distance from each node to its right neighbour (periodic).
    ramp : ndarray
        ``(xi - x_-*)_L`` on excited nodes and ``(xi - x_+*)_L`` on relaxation
        nodes, i.e. the distance from the left end of the node's arc.
    """

    L: float
    nodes: np.ndarray
    index_plus: int
    index_minus: int
    region: np.ndarray
    spacing: np.ndarray
    ramp: np.ndarray

    @property
    def size(self) -> int:
        return self.nodes.size

    @property
    def excited(self) -> np.ndarray:
        return self.region == Region.EXCITED

    def forward_diff(self, f: np.ndarray) -> np.ndarray:
        """Periodic forward difference along the last axis."""
        out = np.empty_like(f)
        out[..., :-1] = f[..., 1:] - f[..., :-1]
        out[..., -1] = f[..., 0] - f[..., -1]
        out /= self.spacing
        return out


def build_grid(L: float, x_plus: float, x_minus: float, nodes: int) -> Grid:
    """Grid whose node counts per arc are proportional to the arc lengths."""
    if nodes < 4:
        raise ValueError("need at least 4 nodes")
    len_r = wrap(x_minus - x_plus, L)
    len_e = L - len_r
    n_e = min(max(2, round(nodes * len_e / L)), nodes - 2)
    n_r = nodes - n_e
    h_r, h_e = len_r / n_r, len_e / n_e

    ramp = np.concatenate([np.arange(n_r) * h_r, np.arange(n_e) * h_e])
    offset = np.concatenate([ramp[:n_r], len_r + ramp[n_r:]])
    region = np.concatenate(
        [np.full(n_r, Region.RELAXATION), np.full(n_e, Region.EXCITED)]
    ).astype(np.int8)
    spacing = np.where(region == Region.EXCITED, h_e, h_r)
    pos = wrap(x_plus + offset, L)

    # rotate so positions increase from the node nearest 0
    shift = int(np.argmin(pos))
    order = np.roll(np.arange(nodes), -shift)
    pos, region, spacing, ramp = pos[order], region[order], spacing[order], ramp[order]
    if not np.all(np.diff(pos) > 0):
        raise ValueError("grid construction produced non-increasing nodes")
    return Grid(
        L=float(L),
        nodes=pos,
        index_plus=int((0 - shift) % nodes),
        index_minus=int((n_r - shift) % nodes),
        region=region,
        spacing=spacing,
        ramp=ramp,
    )


@dataclass(frozen=True, eq=False)
class PulseSolution:
    """Stationary pulse sampled on a grid.

    ``c0_plus_prime`` etc. are the speed-law derivatives at the interface values
    ``w_plus = w_*(x_+*)`` and ``w_minus = w_*(x_-*)``.
    """

    params: ModelParams
    grid: Grid
    w_star: np.ndarray
    x_plus_star: float
    x_minus_star: float
    rho_star: float
    c0: float
    w_plus: float
    w_minus: float
    c0_plus_prime: float
    c0_minus_prime: float
    c0_plus_dblprime: float
    c0_minus_dblprime: float
    newton_residual: float
    newton_iterations: int

    @property
    def geometry(self) -> tuple[float, float, float, float]:
        """``(x_-*, x_+*, rho_*, L)`` as consumed by :func:`kinephase.model.coord_x`."""
        return (self.x_minus_star, self.x_plus_star, self.rho_star, self.params.L)

    @property
    def dw_star(self) -> np.ndarray:
        """Forward difference of the sampled profile."""
        return self.grid.forward_diff(self.w_star)

    def profile(self, xi) -> np.ndarray:
        """Exact profile at arbitrary positions."""
        xi = np.asarray(xi, dtype=float)
        L = self.params.L
        s_minus = wrap(xi - self.x_minus_star, L)
        s_plus = wrap(xi - self.x_plus_star, L)
        excited = s_minus < 2.0 * self.rho_star
        return _sample(self.params, self.c0, self.w_plus, self.w_minus,
                       np.where(excited, s_minus, s_plus), excited)

    def resampled(self, nodes: int) -> "PulseSolution":
        """Same pulse on a grid with a different node count."""
        return _assemble(self.params, self.x_plus_star,
                         wrap(self.x_minus_star - self.x_plus_star, self.params.L),
                         self.w_plus, nodes, self.newton_residual, self.newton_iterations)


def _sample(params, c0, w_plus, w_minus, dist, excited):
    # dist is measured from the left end of the arc (x_-* for E, x_+* for R)
    k = params.decay
    lam = k / c0
    root_e = 1.0 / k
    with np.errstate(over="ignore", invalid="ignore"):
        return np.where(
            excited,
            root_e + (w_minus - root_e) * np.exp(lam * dist),
            w_plus * np.exp(lam * dist),
        )


def continuity_residual(params: ModelParams, len_r: float, log_w_plus: float):
    """Continuity mismatches at both interfaces and their Jacobian.

    The unknowns are the relaxation-arc length and ``log(w_*(x_+*))``; the
    speed follows as ``c(w_plus)``. On R the profile is ``w_plus exp(lam s)``
    and on E the gap ``1/k - w`` is ``(1/k - w_minus) exp(lam s)``, with
    ``lam = k / c0``. Continuity is imposed on the logarithms, which keeps both
    mismatches O(1) and relative even when ``w_plus`` is tiny.

    Returns
    -------
    r : ndarray, shape (2,)
        Log mismatch across R and gap-weighted log mismatch across E, or
        ``inf`` if the trial point has
        ``w_minus >= 1/k`` (no monotone E arc exists).
    jac : ndarray, shape (2, 2)
        Derivatives with respect to ``(len_r, log_w_plus)``.
    """
    k = params.decay
    root_e = 1.0 / k
    len_e = params.L - len_r
    w_plus = math.exp(log_w_plus)
    c0 = wave_speed(w_plus, params)
    dc = wave_speed(w_plus, params, 1)
    w_m = wave_speed_inverse(-c0, params)
    gap_p = root_e - w_plus
    gap_m = root_e - w_m
    if not gap_m > 0.0:
        return np.full(2, np.inf), np.full((2, 2), np.nan)
    dw_m = 2.0 / (4.0 + c0 * c0) ** 1.5 * dc
    lam = k / c0
    dlam = -k / (c0 * c0) * dc

    # the E mismatch is weighted by gap_m: near-flat E arcs (w_minus close to
    # 1/k) would otherwise put a floor of eps/gap_m on the log residual
    log_e = math.log(gap_p) - math.log(gap_m) - lam * len_e
    r = np.array([log_w_plus - math.log(w_m) + lam * len_r, gap_m * log_e])
    # derivatives in w_plus, scaled by w_plus for the log unknown
    jac = np.array([
        [lam, 1.0 + w_plus * (-dw_m / w_m + len_r * dlam)],
        [gap_m * lam,
         w_plus * (gap_m * (-1.0 / gap_p - len_e * dlam) + dw_m * (1.0 - log_e))],
    ])
    return r, jac


def _newton(params, guess, tol, max_iter, polish=3):
    L = params.L
    log_top = math.log(0.5 - params.alpha)
    z = np.array(guess, dtype=float)
    r, jac = continuity_residual(params, *z)
    norm = np.max(np.abs(r))
    it = 0
    extra = 0
    while it < max_iter:
        if norm < tol:
            # a few more steps while the residual keeps falling
            if extra == polish:
                break
            extra += 1
        try:
            step = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError:
            break
        t = 1.0
        for _ in range(40):
            trial = z + t * step
            if 0.0 < trial[0] < L and trial[1] < log_top:
                r_new, jac_new = continuity_residual(params, *trial)
                norm_new = np.max(np.abs(r_new))
                if norm_new < norm:
                    break
            t *= 0.5
        else:
            break
        z, r, jac, norm = trial, r_new, jac_new, norm_new
        it += 1
    if norm < tol:
        return z, norm, it
    raise NoConvergence(f"Newton stalled at residual {norm:.3e} from guess {tuple(guess)}")


def _coarse_guess(params, n=40):
    L = params.L
    best, best_norm = None, np.inf
    for log_w in np.linspace(-60.0, math.log(0.99 * (0.5 - params.alpha)), n):
        for len_r in np.linspace(0.02, 0.98, n) * L:
            r, _ = continuity_residual(params, len_r, log_w)
            norm = np.max(np.abs(r))
            if norm < best_norm:
                best, best_norm = (len_r, log_w), norm
    if best is None:
        raise NoConvergence("no admissible starting point found")
    return best


def _assemble(params, x_plus, len_r, w_plus, nodes, residual, iterations):
    L = params.L
    c0 = wave_speed(w_plus, params)
    x_minus = wrap(x_plus + len_r, L)
    rho = 0.5 * (L - len_r)
    grid = build_grid(L, x_plus, x_minus, nodes)
    w_minus = wave_speed_inverse(-c0, params)
    excited = grid.excited
    w = _sample(params, c0, w_plus, w_minus, grid.ramp, excited)
    if not np.all(np.isfinite(w)):
        raise DegeneratePulse("profile overflows on this grid")
    w.setflags(write=False)
    return PulseSolution(
        params=params,
        grid=grid,
        w_star=w,
        x_plus_star=float(x_plus),
        x_minus_star=float(x_minus),
        rho_star=float(rho),
        c0=float(c0),
        w_plus=float(w_plus),
        w_minus=float(w_minus),
        c0_plus_prime=wave_speed(w_plus, params, 1),
        c0_minus_prime=wave_speed(w_minus, params, 1),
        c0_plus_dblprime=wave_speed(w_plus, params, 2),
        c0_minus_dblprime=wave_speed(w_minus, params, 2),
        newton_residual=float(residual),
        newton_iterations=int(iterations),
    )


def solve_pulse(params: ModelParams, nodes: int = DEFAULT_NODES, *,
                x_plus: float = 0.0, tol: float = 1e-12, max_iter: int = 60) -> PulseSolution:
    """Solve for the stationary pulse and sample it on a grid.

    Parameters
    ----------
    params : ModelParams
    nodes : int
        Total node count (at least 64).
    x_plus : float
        Gauge choice for the leading interface; 0 by default.
    tol : float
        Max-norm tolerance on the two continuity residuals.

    Raises
    ------
    NoConvergence
        If neither the default guess nor the coarse-search guess converges.
    DegeneratePulse
        If the converged half-width is at the edge of ``(0, L/2)``.
    """
    if nodes < 64:
        raise ValueError(f"need at least 64 nodes, got {nodes}")
    L = params.L
    guess = (0.5 * L, math.log(wave_speed_inverse(0.5 * wave_speed(0.0, params), params)))
    try:
        z, res, its = _newton(params, guess, tol, max_iter)
    except NoConvergence:
        z, res, its = _newton(params, _coarse_guess(params), tol, max_iter)
    len_r, w_plus = z[0], math.exp(z[1])
    rho = 0.5 * (L - len_r)
    edge = 1e-6 * L
    if not (edge < rho < 0.5 * L - edge):
        raise DegeneratePulse(f"half-width {rho} degenerate for L={L}")
    return _assemble(params, wrap(x_plus, L), len_r, w_plus, nodes, res, its)


def pulse_residual(pulse: PulseSolution, stencil: str = "fitted") -> float:
    """Max over nodes of ``|c0 D w_* + g(w_*)|`` using a forward-difference stencil.

    ``stencil="upwind"`` is the plain quotient ``(w_{i+1} - w_i)/h``, which is
    first order in ``h``. ``stencil="fitted"`` multiplies it by
    ``z / (e^z - 1)`` with ``z = (1 + gamma) h / c0``, which makes it exact for
    the affine branches, so the residual measures the sampled solution rather
    than the stencil.
    """
    grid = pulse.grid
    d = grid.forward_diff(pulse.w_star)
    if stencil == "fitted":
        z = pulse.params.decay * grid.spacing / pulse.c0
        d = d * (z / np.expm1(z))
    elif stencil != "upwind":
        raise ValueError(f"unknown stencil {stencil!r}")
    res = pulse.c0 * d + branch_reaction(pulse.w_star, grid.region, pulse.params)
    return float(np.max(np.abs(res)))
