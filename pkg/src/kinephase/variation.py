"""First and second variations of the pulse flow along a noise direction.

In interface-fixing coordinates the discrete flow for ``(w, rho)`` has the
stationary pulse as a fixed point. Differentiating once gives a linear system
for ``(v, rho - rho_*)``; half of the second derivative, ``(nu, zeta - rho_*)``,
obeys the same linear operator driven by a quadratic form in ``(v, rho)``.
Both systems are discretized with the periodic forward difference of the pulse
grid and co-integrated with classical RK4 so the forcing of the second system
is always evaluated at stage-consistent values of the first.

Every array argument may carry leading batch dimensions: fields have shape
``(..., M)`` and the width perturbations shape ``(...)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import Instability
from .pulse import PulseSolution

__all__ = [
    "VariationState",
    "VariationTraces",
    "default_dt",
    "rhs_first",
    "rhs_second",
    "integrate_variations",
    "integrate_batch",
    "write_traces_csv",
]

DEFAULT_CFL = 0.4


@dataclass
class VariationState:
    """``v`` and ``nu`` on the grid with the width perturbations ``rho - rho_*`` and ``zeta - rho_*``."""

    v: np.ndarray
    rho_dev: np.ndarray | float
    nu: np.ndarray
    zeta_dev: np.ndarray | float

    @classmethod
    def initial(cls, v0: np.ndarray) -> "VariationState":
        v0 = np.asarray(v0, dtype=float)
        zero = np.zeros(v0.shape[:-1])
        return cls(v0.copy(), zero, np.zeros_like(v0), zero.copy())


@dataclass(frozen=True, eq=False)
class VariationTraces:
    """Interface traces of one direction on the RK4 time grid."""

    times: np.ndarray
    v_plus: np.ndarray
    v_minus: np.ndarray
    nu_plus: np.ndarray
    nu_minus: np.ndarray
    rho_dev_t: np.ndarray
    zeta_dev_t: np.ndarray
    decayed: bool

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def T_s(self) -> float:
        return float(self.times[-1])

    def terminal_max(self) -> float:
        return float(max(abs(self.v_plus[-1]), abs(self.v_minus[-1]),
                         abs(self.nu_plus[-1]), abs(self.nu_minus[-1])))

    def head(self, n: int) -> "VariationTraces":
        """Traces restricted to the first ``n + 1`` samples."""
        sl = slice(0, n + 1)
        return VariationTraces(self.times[sl], self.v_plus[sl], self.v_minus[sl],
                               self.nu_plus[sl], self.nu_minus[sl],
                               self.rho_dev_t[sl], self.zeta_dev_t[sl], self.decayed)


@dataclass(frozen=True, eq=False)
class _Operator:
    """Time-independent coefficient fields of the linearized flow."""

    c0: float
    decay: float
    ip: int
    im: int
    cp: float
    cm: float
    cpp: float
    cmm: float
    spacing: np.ndarray
    dw: np.ndarray      # forward difference of the sampled pulse
    coef_r: np.ndarray  # multiplies rho - rho_*
    coef_m: np.ndarray  # multiplies v(x_-*)
    coef_p: np.ndarray  # multiplies v(x_+*)
    ramp: np.ndarray    # multiplies c'_+ v_+ + c'_- v_-
    sq_m: np.ndarray    # multiplies v(x_-*)^2 in the second-order forcing
    sq_p: np.ndarray    # multiplies v(x_+*)^2 in the second-order forcing
    g2: float           # g'' of the branches, zero for affine ones


@lru_cache(maxsize=16)
def _operator(pulse: PulseSolution) -> _Operator:
    grid = pulse.grid
    L, rho, c0 = pulse.params.L, pulse.rho_star, pulse.c0
    width_r = L - 2.0 * rho
    e = grid.excited
    s = grid.ramp
    return _Operator(
        c0=c0,
        decay=pulse.params.decay,
        ip=grid.index_plus,
        im=grid.index_minus,
        cp=pulse.c0_plus_prime,
        cm=pulse.c0_minus_prime,
        cpp=pulse.c0_plus_dblprime,
        cmm=pulse.c0_minus_dblprime,
        spacing=grid.spacing,
        dw=pulse.dw_star,
        coef_r=np.where(e, -c0 / rho, 2.0 * c0 / width_r),
        coef_m=np.where(e, -pulse.c0_minus_prime, 0.0),
        coef_p=np.where(e, 0.0, pulse.c0_plus_prime),
        ramp=np.where(e, s / (2.0 * rho), -s / width_r),
        sq_m=np.where(e, -0.5 * pulse.c0_minus_dblprime, 0.0),
        sq_p=np.where(e, 0.0, 0.5 * pulse.c0_plus_dblprime),
        g2=0.0,
    )


def _dplus(f, h):
    out = np.empty_like(f)
    out[..., :-1] = f[..., 1:] - f[..., :-1]
    out[..., -1] = f[..., 0] - f[..., -1]
    out /= h
    return out


def _transport(op: _Operator, f, r):
    """Coefficient of ``D w_*`` in the linearization, and the width rate."""
    fp = f[..., op.ip, None]
    fm = f[..., op.im, None]
    ds = op.cp * fp + op.cm * fm
    coef = r[..., None] * op.coef_r + fm * op.coef_m + fp * op.coef_p + ds * op.ramp
    return coef, 0.5 * ds[..., 0]


def _linear(op: _Operator, f, r):
    coef, dr = _transport(op, f, r)
    return op.c0 * _dplus(f, op.spacing) + coef * op.dw - op.decay * f, dr


def rhs_first(state: VariationState, pulse: PulseSolution):
    """Time derivative ``(dv/dt, d rho/dt)`` of the first variation."""
    op = _operator(pulse)
    return _linear(op, np.asarray(state.v, float), np.asarray(state.rho_dev, float))


def _second(op: _Operator, v, r, coef_v, nu, z):
    # coef_v is the transport coefficient already computed for (v, r)
    dnu, dz = _linear(op, nu, z)
    vp = v[..., op.ip, None]
    vm = v[..., op.im, None]
    quad = op.cpp * vp * vp + op.cmm * vm * vm
    forcing = (
        (0.5 * quad) * op.ramp
        + (r[..., None] / op.c0) * op.coef_r * coef_v
        + (vm * vm) * op.sq_m
        + (vp * vp) * op.sq_p
    )
    dnu += coef_v * _dplus(v, op.spacing) + forcing * op.dw
    if op.g2:
        dnu += 0.5 * op.g2 * v * v
    return dnu, dz + 0.25 * quad[..., 0]


def rhs_second(state: VariationState, pulse: PulseSolution):
    """Time derivative ``(dnu/dt, d zeta/dt)`` of the half second variation.

    The forcing is built from the ``(v, rho_dev)`` stored in ``state``.
    """
    op = _operator(pulse)
    v = np.asarray(state.v, float)
    r = np.asarray(state.rho_dev, float)
    coef_v, _ = _transport(op, v, r)
    return _second(op, v, r, coef_v, np.asarray(state.nu, float), np.asarray(state.zeta_dev, float))


def _rhs(op, y):
    v, r, nu, z = y
    coef_v, dr = _transport(op, v, r)
    dv = op.c0 * _dplus(v, op.spacing) + coef_v * op.dw - op.decay * v
    dnu, dz = _second(op, v, r, coef_v, nu, z)
    return dv, dr, dnu, dz


def default_dt(pulse: PulseSolution, cfl: float = DEFAULT_CFL) -> float:
    """Advective step bound ``cfl * min spacing / c0``."""
    return cfl * float(np.min(pulse.grid.spacing)) / pulse.c0


def _record(op, y, out):
    v, r, nu, z = y
    out[..., 0] = v[..., op.ip]
    out[..., 1] = v[..., op.im]
    out[..., 2] = nu[..., op.ip]
    out[..., 3] = nu[..., op.im]
    out[..., 4] = r
    out[..., 5] = z


def _march(op, y, dt, n, out):
    h2, h6 = 0.5 * dt, dt / 6.0
    for i in range(n):
        k1 = _rhs(op, y)
        k2 = _rhs(op, [a + h2 * b for a, b in zip(y, k1)])
        k3 = _rhs(op, [a + h2 * b for a, b in zip(y, k2)])
        k4 = _rhs(op, [a + dt * b for a, b in zip(y, k3)])
        y = [a + h6 * (b1 + 2.0 * (b2 + b3) + b4) for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4)]
        _record(op, y, out[i])
        if not np.all(np.isfinite(out[i])):
            raise Instability(f"non-finite variation at step {i + 1}; dt={dt:g} too large?")
    return y


def integrate_batch(pulse: PulseSolution, v0: np.ndarray, T_s: float = 100.0, *,
                    dt: float | None = None, decay_tol: float = 1e-8,
                    max_T_s: float = 800.0, labels=None) -> list[VariationTraces]:
    """Co-integrate first and second variations for a stack of initial fields.

    Parameters
    ----------
    v0 : ndarray, shape (B, M)
        Initial first variations; ``nu``, ``rho_dev`` and ``zeta_dev`` start at 0.
    T_s : float
        Horizon. If some row has not decayed, integration continues to
        ``2 T_s``, ``4 T_s``, ... up to ``max_T_s``.
    dt : float, optional
        Nominal step, :func:`default_dt` by default. It is shrunk so that an
        integer number of steps spans ``T_s``.
    decay_tol : float
        A row is decayed when its terminal interface values of ``v`` are below
        ``decay_tol * max|v0|`` and those of ``nu`` below ``decay_tol * max|v0|^2``.
    labels : sequence, optional
        Row labels used in error messages.

    Raises
    ------
    Instability
        If any value becomes non-finite.
    """
    op = _operator(pulse)
    v0 = np.atleast_2d(np.asarray(v0, dtype=float))
    batch = v0.shape[0]
    if dt is None:
        dt = default_dt(pulse)
    n = max(1, math.ceil(T_s / dt - 1e-9))
    dt = T_s / n
    scale = np.max(np.abs(v0), axis=1)

    state = VariationState.initial(v0)
    y = [state.v, state.rho_dev, state.nu, state.zeta_dev]
    chunks = [np.empty((1, batch, 6))]
    _record(op, y, chunks[0][0])
    steps, horizon = 0, T_s
    while True:
        block = np.empty((n - steps, batch, 6))
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                y = _march(op, y, dt, n - steps, block)
        except Instability as exc:
            raise Instability(f"{exc} (directions {labels})") from None
        chunks.append(block)
        steps = n
        last = block[-1]
        done = (np.maximum(np.abs(last[:, 0]), np.abs(last[:, 1])) < decay_tol * scale) & (
            np.maximum(np.abs(last[:, 2]), np.abs(last[:, 3])) < decay_tol * scale**2
        )
        if done.all() or 2.0 * horizon > max_T_s * (1 + 1e-12):
            break
        horizon *= 2.0
        n *= 2

    data = np.concatenate(chunks)
    times = np.arange(steps + 1) * dt
    return [
        VariationTraces(times, *(np.ascontiguousarray(data[:, b, j]) for j in range(6)), bool(done[b]))
        for b in range(batch)
    ]


def integrate_variations(pulse: PulseSolution, direction, dt: float | None = None,
                         T_s: float = 100.0, decay_tol: float = 1e-8,
                         max_T_s: float = 800.0) -> VariationTraces:
    """Single-direction form of :func:`integrate_batch`.

    ``direction`` is a :class:`kinephase.noise.Direction` or a plain field.
    """
    v0 = getattr(direction, "v0", direction)
    label = getattr(direction, "label", None)
    return integrate_batch(pulse, np.asarray(v0)[None], T_s, dt=dt, decay_tol=decay_tol,
                           max_T_s=max_T_s, labels=[label])[0]


def write_traces_csv(traces: VariationTraces, path) -> None:
    """Dump traces with columns t, v_plus, v_minus, nu_plus, nu_minus, rho_dev, zeta_dev."""
    cols = [traces.times, traces.v_plus, traces.v_minus, traces.nu_plus,
            traces.nu_minus, traces.rho_dev_t, traces.zeta_dev_t]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "v_plus", "v_minus", "nu_plus", "nu_minus", "rho_dev", "zeta_dev"])
        for row in zip(*cols):
            writer.writerow([repr(float(x)) for x in row])
