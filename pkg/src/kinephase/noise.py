"""Spectral noise specifications, perturbation directions and noise increments.

Translation-invariant noise with correlation ``C(x - y)`` is expanded as

    sigma * sum_k a_k [cos(2 pi k x / L) dW_{2k} + sin(2 pi k x / L) dW_{2k+1}],

so that ``C(d) = sum_k a_k^2 cos(2 pi k d / L)``. Coefficients are normalized
to ``sum_k a_k^2 = 1`` and the prefactor ``sigma`` carries the strength.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidSpec
from .model import ModelParams, NoiseProfileKind, noise_amplitude
from .pulse import Grid, PulseSolution

__all__ = [
    "NoiseKind",
    "NoiseSpec",
    "Direction",
    "build_noise_spec",
    "gaussian_coefficients",
    "truncation_index",
    "directions",
    "mode_positions",
    "sample_increment",
    "noise_field",
    "SIM_MODES",
    "GAUSSIAN_N_TRUNC",
]

# modes synthesized in simulation, independent of the reduction truncation
SIM_MODES = 20
# hard truncation for Gaussian-correlated noise in the reduction
GAUSSIAN_N_TRUNC = 10

_IMAGES = 8
_QUAD_POINTS = 4096


class NoiseKind(str, enum.Enum):
    SCALAR = "scalar"
    SINGLE_MODE = "single_mode"
    GAUSSIAN = "gaussian"
    CUSTOM = "custom"


@dataclass(frozen=True, eq=False)
class NoiseSpec:
    """Normalized Fourier coefficients of a translation-invariant noise.

    Attributes
    ----------
    kind : NoiseKind
    a : ndarray
        Non-negative amplitudes ``a_0 .. a_{n_max}``, with ``sum a_k^2 = 1``.
    n_trunc : int
        Highest wavenumber retained by the phase reduction.
    mode : int or None
        Wavenumber of a single-mode spec.
    ell : float or None
        Inverse squared correlation length of a Gaussian spec.
    """

    kind: NoiseKind
    a: np.ndarray
    n_trunc: int
    mode: int | None = None
    ell: float | None = None
    label: str = field(default="")

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        if a.ndim != 1 or a.size == 0:
            raise InvalidSpec("coefficient list must be a non-empty 1-d sequence")
        if np.any(~np.isfinite(a)) or np.any(a < 0):
            raise InvalidSpec("coefficients must be finite and non-negative")
        if not 0 <= self.n_trunc < a.size:
            raise InvalidSpec(f"n_trunc={self.n_trunc} outside [0, {a.size - 1}]")
        a.setflags(write=False)
        object.__setattr__(self, "a", a)
        if not self.label:
            object.__setattr__(self, "label", _default_label(self))

    @property
    def n_max(self) -> int:
        return self.a.size - 1

    @property
    def a_sq(self) -> np.ndarray:
        return self.a**2

    def truncated(self, n: int) -> "NoiseSpec":
        """Copy with the reduction truncation set to ``n``."""
        return NoiseSpec(self.kind, self.a, min(int(n), self.n_max), self.mode, self.ell)

    def to_dict(self) -> dict:
        out = {"kind": self.kind.value, "n_max": self.n_max, "n_trunc": self.n_trunc}
        if self.kind is NoiseKind.SINGLE_MODE:
            out["mode"] = self.mode
        elif self.kind is NoiseKind.GAUSSIAN:
            out["ell"] = self.ell
        elif self.kind is NoiseKind.CUSTOM:
            out["a_sq"] = [float(x) for x in self.a_sq]
        return out

    @classmethod
    def from_dict(cls, d: dict, L: float) -> "NoiseSpec":
        """Rebuild from :meth:`to_dict` output; ``L`` is needed for Gaussian specs."""
        kind = NoiseKind(d["kind"])
        param = {
            NoiseKind.SCALAR: None,
            NoiseKind.SINGLE_MODE: d.get("mode"),
            NoiseKind.GAUSSIAN: d.get("ell"),
            NoiseKind.CUSTOM: d.get("a_sq"),
        }[kind]
        n_max = d.get("n_max")
        if n_max is None:
            n_max = len(param) - 1 if kind is NoiseKind.CUSTOM else SIM_MODES - 1
        spec = build_noise_spec(kind, ModelParams(L=L), int(n_max), param)
        if "n_trunc" in d:
            spec = spec.truncated(int(d["n_trunc"]))
        return spec


def _default_label(spec: NoiseSpec) -> str:
    if spec.kind is NoiseKind.SINGLE_MODE:
        return f"single_mode({spec.mode})"
    if spec.kind is NoiseKind.GAUSSIAN:
        return f"gaussian(ell={spec.ell:g})"
    return spec.kind.value


def gaussian_coefficients(ell: float, L: float, n_max: int) -> np.ndarray:
    """Squared amplitudes of the periodized Gaussian correlation ``sum_n exp(-ell (x + n L)^2)``.

    Cosine coefficients are computed by the trapezoidal rule on a uniform
    periodic grid and normalized over ``0 .. n_max``.
    """
    if ell < 0:
        raise InvalidSpec(f"ell must be non-negative, got {ell}")
    a_sq = np.zeros(n_max + 1)
    if ell == 0:
        a_sq[0] = 1.0
        return a_sq
    x = np.arange(_QUAD_POINTS) * (L / _QUAD_POINTS)
    n = np.arange(-_IMAGES, _IMAGES + 1)[:, None]
    corr = np.exp(-ell * (x + n * L) ** 2).sum(axis=0)
    k = np.arange(n_max + 1)[:, None]
    a_sq = np.mean(corr * np.cos(2.0 * np.pi * k * x / L), axis=1)
    a_sq[1:] *= 2.0
    # negative round-off in far tails
    a_sq = np.clip(a_sq, 0.0, None)
    return a_sq / a_sq.sum()


def build_noise_spec(kind, params: ModelParams, n_max: int, param=None) -> NoiseSpec:
    """Construct a normalized spec.

    Parameters
    ----------
    kind : NoiseKind or str
    params : ModelParams
        Only ``L`` is used (Gaussian coefficients).
    n_max : int
        Highest stored wavenumber.
    param
        Wavenumber for ``single_mode``, ``ell`` for ``gaussian``, the list of
        ``a_k^2`` for ``custom``; ignored for ``scalar``.

    Raises
    ------
    InvalidSpec
        On negative or all-zero custom values, or a mode above ``n_max``.
    """
    kind = NoiseKind(kind)
    if n_max < 0:
        raise InvalidSpec("n_max must be non-negative")
    mode = ell = None
    if kind is NoiseKind.SCALAR:
        a_sq = np.zeros(n_max + 1)
        a_sq[0] = 1.0
        n_trunc = 0
    elif kind is NoiseKind.SINGLE_MODE:
        mode = int(param)
        if not 0 <= mode <= n_max:
            raise InvalidSpec(f"mode {mode} outside [0, n_max={n_max}]")
        a_sq = np.zeros(n_max + 1)
        a_sq[mode] = 1.0
        n_trunc = mode
    elif kind is NoiseKind.GAUSSIAN:
        ell = float(param)
        a_sq = gaussian_coefficients(ell, params.L, n_max)
        n_trunc = min(GAUSSIAN_N_TRUNC, n_max)
    else:
        a_sq = np.asarray(param, dtype=float)
        if a_sq.ndim != 1 or a_sq.size == 0:
            raise InvalidSpec("custom spec needs a non-empty list of a_k^2")
        if np.any(a_sq < 0) or not np.all(np.isfinite(a_sq)):
            raise InvalidSpec("custom a_k^2 must be finite and non-negative")
        # pad with zeros or cut to n_max, then renormalize
        a_sq = np.concatenate([a_sq, np.zeros(max(0, n_max + 1 - a_sq.size))])[: n_max + 1]
        total = math.fsum(a_sq)
        if total == 0:
            raise InvalidSpec("custom a_k^2 are all zero up to n_max")
        a_sq = a_sq / total
        n_trunc = a_sq.size - 1
    return NoiseSpec(kind, np.sqrt(a_sq), n_trunc, mode, ell)


def truncation_index(spec: NoiseSpec, sigma: float, safety: float = 1.0) -> int:
    """Smallest ``n`` whose tails ``sum_{k>n} a_k`` and ``sum_{k>n} a_k^2`` are below ``safety sigma^2``."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    bound = safety * sigma * sigma
    # tail[n] = sum over k > n
    tail_a = np.concatenate([np.cumsum(spec.a[::-1])[::-1][1:], [0.0]])
    tail_sq = np.concatenate([np.cumsum(spec.a_sq[::-1])[::-1][1:], [0.0]])
    ok = np.flatnonzero((tail_a < bound) & (tail_sq < bound))
    return int(ok[0]) if ok.size else spec.n_max


@dataclass(frozen=True, eq=False)
class Direction:
    """Initial perturbation ``h(w_*) cos|sin(2 pi k x(xi, rho_*) / L)`` for one noise mode."""

    k: int
    parity: str
    a: float
    v0: np.ndarray

    @property
    def label(self) -> tuple[int, str]:
        return (self.k, self.parity)

    @property
    def index(self) -> int:
        """Brownian index: ``2k`` for cos, ``2k + 1`` for sin."""
        return 2 * self.k + (self.parity == "sin")


def mode_positions(grid: Grid, rho, rho_star: float) -> np.ndarray:
    """Pulse-relative positions ``x(xi, rho)`` of the grid nodes.

    ``rho`` may be an array of half-widths, giving one row per entry.
    """
    rho = np.asarray(rho, dtype=float)[..., None]
    excited = grid.excited
    return np.where(
        excited,
        grid.ramp * (rho / rho_star) - rho,
        grid.ramp * ((grid.L - 2.0 * rho) / (grid.L - 2.0 * rho_star)) + rho,
    )


def directions(spec: NoiseSpec, pulse: PulseSolution, h_kind=NoiseProfileKind.ADDITIVE) -> list[Direction]:
    """Perturbation directions for ``k = 0 .. n_trunc`` with ``a_k > 0``; sin only for ``k >= 1``."""
    grid = pulse.grid
    h = noise_amplitude(pulse.w_star, grid.region, h_kind)
    phase = 2.0 * np.pi * mode_positions(grid, pulse.rho_star, pulse.rho_star) / grid.L
    out = []
    for k in range(spec.n_trunc + 1):
        ak = float(spec.a[k])
        if ak == 0.0:
            continue
        out.append(Direction(k, "cos", ak, h * np.cos(k * phase)))
        if k >= 1:
            out.append(Direction(k, "sin", ak, h * np.sin(k * phase)))
    return out


def noise_field(a: np.ndarray, phase: np.ndarray, z: np.ndarray) -> np.ndarray:
    """``sum_k a_k (cos(k phase) z[..., 2k] + sin(k phase) z[..., 2k+1])``.

    ``phase`` has shape ``(..., M)`` and ``z`` shape ``(..., 2 len(a))``.
    Zero amplitudes are skipped. Higher harmonics come from repeated
    multiplication by ``exp(i phase)``, evaluated by Horner's rule when more
    than a couple of modes are active.
    """
    active = np.flatnonzero(a)
    out = np.zeros(phase.shape)
    if active.size == 0:
        return out
    if active.size <= 2:
        for k in active:
            zc = z[..., 2 * k, None]
            if k == 0:
                out += a[0] * zc
            else:
                zs = z[..., 2 * k + 1, None]
                out += a[k] * (np.cos(k * phase) * zc + np.sin(k * phase) * zs)
        return out
    # Re sum_k a_k (z_{2k} - i z_{2k+1}) e^{ik phase}
    top = active[-1]
    coef = a[: top + 1] * (z[..., 0 : 2 * top + 2 : 2] - 1j * z[..., 1 : 2 * top + 2 : 2])
    e = np.exp(1j * phase)
    acc = np.broadcast_to(coef[..., top, None], phase.shape).astype(complex)
    for k in range(top - 1, -1, -1):
        acc = acc * e
        if a[k] != 0.0:
            acc += coef[..., k, None]
    return acc.real


def sample_increment(spec: NoiseSpec, sigma: float, dt: float, rho: float, pulse: PulseSolution,
                     h_field: np.ndarray, rng: np.random.Generator, n_modes: int = SIM_MODES) -> np.ndarray:
    """One Euler-Maruyama noise increment on the grid.

    Mode shapes are evaluated at ``x(xi, rho)``. Uses the first ``n_modes``
    coefficients of ``spec`` (independent of ``spec.n_trunc``) and draws
    ``2 n_modes`` standard normals from ``rng``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    a = spec.a[:n_modes]
    z = rng.standard_normal(2 * a.size)
    if sigma == 0:
        return np.zeros(pulse.grid.size)
    phase = 2.0 * np.pi * mode_positions(pulse.grid, rho, pulse.rho_star) / pulse.grid.L
    return (sigma * math.sqrt(dt)) * h_field * noise_field(a, phase, z)
