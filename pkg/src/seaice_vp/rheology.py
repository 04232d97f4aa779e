"""Pointwise visco-plastic constitutive algebra.

Symmetric 2x2 tensors are stored as arrays whose last axis holds the
three independent components ``(xx, xy, yy)``; every function here is
vectorised over any leading shape. :class:`SymTensor2` is a named-tuple
view of a single tensor and can be passed anywhere an array is accepted.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np


class DegenerateInputError(ValueError):
    """Raised when the inverse viscosity vanishes (stress undefined)."""


class SymTensor2(NamedTuple):
    xx: float
    xy: float
    yy: float

    def matrix(self) -> np.ndarray:
        return np.array([[self.xx, self.xy], [self.xy, self.yy]], dtype=float)

    @classmethod
    def from_matrix(cls, z) -> "SymTensor2":
        z = np.asarray(z, dtype=float)
        return cls(float(z[0, 0]), float(0.5 * (z[0, 1] + z[1, 0])), float(z[1, 1]))


class CutoffMode(str, enum.Enum):
    """Which inverse-viscosity function sits in the stress denominator."""

    CUTOFF_BOTH = "cutoff_both"
    PLASTIC = "plastic"
    EPS_ONLY = "eps_only"
    # min(delta_p^eps, delta_hi): upper cut-off, keeps the operator coercive
    EPS_UPPER = "eps_upper"
    # max(delta_p^eps, delta_hi): the displayed formula read literally
    EPS_UPPER_MAX = "eps_upper_max"
    EPS_BOTH = "eps_both"


EPS_MODES = (CutoffMode.EPS_ONLY, CutoffMode.EPS_UPPER,
             CutoffMode.EPS_UPPER_MAX, CutoffMode.EPS_BOTH)

# modes whose inverse viscosity is bounded above by delta_hi
UPPER_BOUNDED_MODES = (CutoffMode.CUTOFF_BOTH, CutoffMode.EPS_UPPER,
                       CutoffMode.EPS_BOTH)


@dataclass(frozen=True)
class RheologyParams:
    """Constitutive configuration.

    ``delta_lo``/``delta_hi`` are the lower and upper strain-rate cut-offs
    (1/s), ``epsilon`` the additive regularisation (1/s^2) used by the
    ``eps_*`` modes.
    """

    e_bar: float = 2.0
    delta_lo: float = 2e-9
    delta_hi: float = 2e-4
    epsilon: float = 0.0
    mode: CutoffMode = CutoffMode.CUTOFF_BOTH
    lam: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "mode", CutoffMode(self.mode))
        if not self.e_bar > 0:
            raise ValueError(f"e_bar must be positive, got {self.e_bar}")
        if not 0 < self.delta_lo < self.delta_hi:
            raise ValueError(
                f"need 0 < delta_lo < delta_hi, got {self.delta_lo}, {self.delta_hi}")
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.mode in (CutoffMode.CUTOFF_BOTH, CutoffMode.PLASTIC) and self.epsilon != 0:
            raise ValueError(f"epsilon must be 0 in mode {self.mode.value}")
        object.__setattr__(self, "lam", 2.0 / self.e_bar**2)


def as_tensor(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != 3:
        raise ValueError(f"expected trailing axis of length 3, got shape {z.shape}")
    return z


def frobenius_sq(z) -> np.ndarray:
    z = as_tensor(z)
    return z[..., 0] ** 2 + 2.0 * z[..., 1] ** 2 + z[..., 2] ** 2


def frobenius(z) -> np.ndarray:
    return np.sqrt(frobenius_sq(z))


def double_dot(z, w) -> np.ndarray:
    """Frobenius inner product ``z : w``."""
    z, w = as_tensor(z), as_tensor(w)
    return z[..., 0] * w[..., 0] + 2.0 * z[..., 1] * w[..., 1] + z[..., 2] * w[..., 2]


def trace(z) -> np.ndarray:
    z = as_tensor(z)
    return z[..., 0] + z[..., 2]


def deviator(z) -> np.ndarray:
    z = as_tensor(z)
    half = 0.5 * (z[..., 0] - z[..., 2])
    return np.stack([half, z[..., 1], -half], axis=-1)


def dev_norm_sq(z) -> np.ndarray:
    z = as_tensor(z)
    return 0.5 * (z[..., 0] - z[..., 2]) ** 2 + 2.0 * z[..., 1] ** 2


def general_deviator(z) -> np.ndarray:
    """Deviator of a general (not necessarily symmetric) 2x2 matrix.

    Test helper only; the result is symmetric by construction.
    """
    z = np.asarray(z, dtype=float)
    a = 0.5 * (z[..., 0, 0] - z[..., 1, 1])
    b = 0.5 * (z[..., 0, 1] + z[..., 1, 0])
    return np.stack([np.stack([a, b], -1), np.stack([b, -a], -1)], -2)


def tensor_invariants(z):
    """Return ``(trace, deviator, |deviator|)``."""
    return trace(z), deviator(z), np.sqrt(dev_norm_sq(z))


def d_lambda(z, params: RheologyParams) -> np.ndarray:
    """``lam * dev z + (tr z) Id``."""
    z = as_tensor(z)
    lam = params.lam
    tr = z[..., 0] + z[..., 2]
    half = 0.5 * (z[..., 0] - z[..., 2])
    return np.stack([lam * half + tr, lam * z[..., 1], -lam * half + tr], axis=-1)


def delta_p(z, params: RheologyParams) -> np.ndarray:
    z = as_tensor(z)
    tr = z[..., 0] + z[..., 2]
    return np.sqrt(params.lam * dev_norm_sq(z) + tr * tr)


def _regularize(x, params: RheologyParams) -> np.ndarray:
    """Map the plastic strain rate ``x = delta_p(z)`` to the inverse viscosity."""
    mode = params.mode
    lo, hi = params.delta_lo, params.delta_hi
    if mode is CutoffMode.PLASTIC:
        return np.asarray(x, dtype=float)
    if mode is CutoffMode.CUTOFF_BOTH:
        return np.clip(x, lo, hi)
    xe = np.sqrt(params.epsilon + np.square(x))
    if mode is CutoffMode.EPS_ONLY:
        return xe
    if mode is CutoffMode.EPS_UPPER:
        return np.minimum(xe, hi)
    if mode is CutoffMode.EPS_UPPER_MAX:
        return np.maximum(xe, hi)
    return np.clip(xe, lo, hi)


def delta_reg(z, params: RheologyParams) -> np.ndarray:
    """Inverse viscosity ``delta(z)`` for the configured cut-off mode."""
    return _regularize(delta_p(z, params), params)


def scalar_profile(x, params: RheologyParams) -> np.ndarray:
    """``x / delta`` as a function of the plastic rate ``x >= 0``.

    Nondecreasing in every mode; this is the function whose monotonicity
    carries the operator monotonicity argument.
    """
    x = np.asarray(x, dtype=float)
    if params.mode is CutoffMode.PLASTIC:
        return np.where(x > 0, 1.0, 0.0)
    return x / _regularize(x, params)


def _viscous_from(dl, d, P, params):
    """``(P/2) D^lam z / delta`` and the pressure mask (0 only at plastic ``z = 0``)."""
    P = np.asarray(P, dtype=float)
    if np.any(P < 0):
        raise ValueError("ice strength must be nonnegative")
    zero = d == 0
    mask = np.ones(d.shape)
    if np.any(zero):
        if params.mode is not CutoffMode.PLASTIC:
            raise DegenerateInputError(
                f"inverse viscosity vanishes at z = 0 in mode {params.mode.value}")
        d = np.where(zero, 1.0, d)
        mask = np.where(zero, 0.0, mask)
    v = 0.5 * P[..., None] * (dl / d[..., None])
    return v * mask[..., None], mask


def _stress_from(z, dl, d, P, params):
    s, mask = _viscous_from(dl, d, P, params)
    half_p = 0.5 * np.asarray(P, dtype=float) * mask
    s[..., 0] -= half_p
    s[..., 2] -= half_p
    return s


def viscous_stress(P, z, params: RheologyParams):
    """``sigma + (P/2) m Id`` and ``m``; differences of sigma at equal P cancel the pressure exactly."""
    z = as_tensor(z)
    P = np.broadcast_to(np.asarray(P, dtype=float), z.shape[:-1])
    return _viscous_from(d_lambda(z, params), delta_reg(z, params), P, params)


def sigma(P, z, params: RheologyParams) -> np.ndarray:
    """Visco-plastic stress ``(P/2) (D^lam z / delta(z) - Id)``.

    In plastic mode ``sigma(0) = 0``; in the cut-off modes the rest state
    carries the pressure ``-(P/2) Id``.
    """
    z = as_tensor(z)
    P = np.broadcast_to(np.asarray(P, dtype=float), z.shape[:-1])
    return _stress_from(z, d_lambda(z, params), delta_reg(z, params), P, params)


def yield_lhs(P, z, params: RheologyParams) -> np.ndarray:
    """Left side of the elliptic yield-curve identity evaluated at sigma."""
    s = sigma(P, z, params).copy()
    half_p = 0.5 * np.asarray(P, dtype=float)
    s[..., 0] += half_p
    s[..., 2] += half_p
    tr = s[..., 0] + s[..., 2]
    return 0.25 * tr * tr + dev_norm_sq(s) / params.lam


def yield_ratio(z, params: RheologyParams) -> np.ndarray:
    """``(delta_p / delta)^2``, the expected value of ``yield_lhs / (P^2/4)``."""
    dp = delta_p(z, params)
    d = _regularize(dp, params)
    if params.mode is CutoffMode.PLASTIC:
        return np.ones_like(dp)
    return (dp / d) ** 2


def yield_residual(P, z, params: RheologyParams) -> np.ndarray:
    """``yield_lhs - (P^2/4) (delta_p/delta)^2``; zero in exact arithmetic."""
    z = as_tensor(z)
    if params.mode is CutoffMode.PLASTIC and np.any(delta_p(z, params) == 0):
        raise DegenerateInputError("yield residual undefined for z = 0 in plastic mode")
    P = np.asarray(P, dtype=float)
    return yield_lhs(P, z, params) - 0.25 * P * P * yield_ratio(z, params)


def growth_bound(P, z, params: RheologyParams) -> np.ndarray:
    """``(P/sqrt 2)(1 + delta_p/delta)``, an upper bound on ``|sigma|`` for lam <= 2."""
    dp = delta_p(z, params)
    d = _regularize(dp, params)
    ratio = np.divide(dp, d, out=np.zeros_like(dp), where=d > 0)
    return np.asarray(P, dtype=float) / np.sqrt(2.0) * (1.0 + ratio)
