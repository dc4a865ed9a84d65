"""Algebraic ingredients of the kinematic pulse model.

The recovery field ``w`` lives on the periodic domain ``[0, L)``, split into an
excited arc E and a relaxation arc R by two interfaces. With the piecewise
linear cubic substitute

    f(u) = -u        (u < alpha)
    f(u) = 1 - u     (u > alpha)

the two stable branches of ``f(u) = w`` give the reaction terms
``g_E(w) = 1 - (1 + gamma) w`` and ``g_R(w) = -(1 + gamma) w``, and each
interface moves with the closed-form speed law

    c(w) = (1 - 2 alpha - 2 w) / sqrt((alpha + w)(1 - alpha - w)).

Every function here is pure and accepts scalars or numpy arrays.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

__all__ = [
    "ModelParams",
    "Region",
    "NoiseProfileKind",
    "wrap",
    "f_cub",
    "branch_reaction",
    "branch_slope",
    "wave_speed",
    "wave_speed_inverse",
    "recover_u",
    "noise_amplitude",
    "coord_x",
]


@dataclass(frozen=True)
class ModelParams:
    """Kinematic model parameters.

    The excitability is fixed to 1 and there is no diffusion in ``w``.

    Parameters
    ----------
    L : float
        Length of the periodic domain.
    alpha : float
        Threshold of the piecewise-linear nonlinearity, in ``(0, 1/2)``.
    gamma : float
        Recovery decay rate.
    """

    L: float = 10.0
    alpha: float = 0.2
    gamma: float = 1.0 / 3.0

    def __post_init__(self):
        if not (0.0 < self.alpha < 0.5):
            raise ValueError(f"alpha must lie in (0, 1/2), got {self.alpha}")
        if not self.L > 0.0:
            raise ValueError(f"L must be positive, got {self.L}")
        if not self.gamma > 0.0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")

    @property
    def decay(self) -> float:
        """Slope magnitude ``1 + gamma`` shared by both reaction branches."""
        return 1.0 + self.gamma


class Region(enum.IntEnum):
    EXCITED = 0
    RELAXATION = 1


class NoiseProfileKind(str, enum.Enum):
    """Amplitude profile ``h`` multiplying the noise."""

    ADDITIVE = "additive"
    EXP_U = "exp_u"


def wrap(x, L):
    """Reduce ``x`` into ``[0, L)``.

    This is the one place periodic reduction happens; ``np.mod`` can return
    exactly ``L`` for tiny negative inputs, which is folded back to 0.
    """
    r = np.mod(x, L)
    r = np.where(r >= L, r - L, r)
    return r if np.ndim(r) else float(r)


def f_cub(u, params: ModelParams):
    """Piecewise-linear bistable nonlinearity; the threshold maps to the left branch."""
    u = np.asarray(u, dtype=float)
    out = np.where(u > params.alpha, 1.0 - u, -u)
    return out if out.ndim else float(out)


def branch_reaction(w, region, params: ModelParams):
    """Reaction term ``g_E`` or ``g_R`` evaluated at ``w``.

    ``region`` may be a single :class:`Region` or an array of region codes.
    """
    w = np.asarray(w, dtype=float)
    excited = np.asarray(region) == Region.EXCITED
    out = np.where(excited, 1.0, 0.0) - params.decay * w
    return out if out.ndim else float(out)


def branch_slope(params: ModelParams) -> float:
    """``g'`` on either branch (the branches are parallel lines)."""
    return -params.decay


def _radicand(w, alpha):
    y = alpha + np.asarray(w, dtype=float)
    q = y * (1.0 - y)
    if np.any(~(q > 0.0)):
        raise DomainError(
            "speed law evaluated outside its band: need -alpha < w < 1 - alpha"
        )
    return y, q


def wave_speed(w, params: ModelParams, order: int = 0):
    """Interface speed ``c(w)`` and its analytic derivatives.

    Writing ``y = alpha + w`` and ``q = y (1 - y)``:

    * ``c   = (1 - 2y) / sqrt(q)``
    * ``c'  = -1 / (2 q^{3/2})``
    * ``c'' = 3 (1 - 2y) / (4 q^{5/2})``

    Raises
    ------
    DomainError
        If ``q <= 0`` anywhere, i.e. the state has left the admissible band.
    """
    y, q = _radicand(w, params.alpha)
    if order == 0:
        out = (1.0 - 2.0 * y) / np.sqrt(q)
    elif order == 1:
        out = -0.5 * q**-1.5
    elif order == 2:
        out = 0.75 * (1.0 - 2.0 * y) * q**-2.5
    else:
        raise ValueError(f"order must be 0, 1 or 2, got {order}")
    return out if np.ndim(out) else float(out)


def wave_speed_inverse(c, params: ModelParams):
    """The unique ``w`` in the admissible band with ``wave_speed(w) == c``."""
    c = np.asarray(c, dtype=float)
    out = 0.5 * (1.0 - c / np.sqrt(4.0 + c * c)) - params.alpha
    return out if out.ndim else float(out)


def recover_u(w, region):
    """Recover ``u`` from ``w`` on the stable branch of ``region``."""
    w = np.asarray(w, dtype=float)
    excited = np.asarray(region) == Region.EXCITED
    out = np.where(excited, 1.0 - w, -w)
    return out if out.ndim else float(out)


def noise_amplitude(w, region, kind: NoiseProfileKind):
    """Noise profile ``h``: 1 for additive noise, ``exp(u)`` for the voltage-driven one."""
    kind = NoiseProfileKind(kind)
    if kind is NoiseProfileKind.ADDITIVE:
        out = np.ones_like(np.asarray(w, dtype=float))
    else:
        out = np.exp(recover_u(w, region))
    return out if np.ndim(out) else float(out)


def coord_x(xi, rho, pulse_geometry):
    """Physical position, relative to the pulse midpoint, of transformed coordinate ``xi``.

    Parameters
    ----------
    xi : float or ndarray
        Interface-fixing coordinate in ``[0, L)``.
    rho : float
        Current half-width, in ``(0, L/2)``.
    pulse_geometry : tuple
        ``(x_minus_star, x_plus_star, rho_star, L)``.

    Returns
    -------
    float or ndarray
        ``(xi - x_-*)_L rho / rho_* - rho`` on the excited arc and
        ``(xi - x_+*)_L (L - 2 rho) / (L - 2 rho_*) + rho`` on the relaxation
        arc. The anchors are ``-rho`` at ``x_-*`` and ``rho`` at ``x_+*``.
    """
    x_minus, x_plus, rho_star, L = pulse_geometry
    if not (0.0 < rho < 0.5 * L):
        raise DomainError(f"half-width {rho} outside (0, L/2) with L={L}")
    xi = np.asarray(xi, dtype=float)
    from_minus = wrap(xi - x_minus, L)
    from_plus = wrap(xi - x_plus, L)
    excited = from_minus < 2.0 * rho_star
    out = np.where(
        excited,
        from_minus * rho / rho_star - rho,
        from_plus * (L - 2.0 * rho) / (L - 2.0 * rho_star) + rho,
    )
    return out if out.ndim else float(out)

