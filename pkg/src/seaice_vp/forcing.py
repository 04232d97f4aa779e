"""Ocean drag, Coriolis rotation and external body loads.

Vectors are arrays with a trailing axis of length 2. Time-dependent nodal
data live in :class:`NodalSeries`, which interpolates linearly between
stored slices and refuses to extrapolate.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

THETA_MAX = math.pi / 4


def perp(v) -> np.ndarray:
    """``(-v2, v1)``: counter-clockwise rotation by a right angle."""
    v = np.asarray(v, dtype=float)
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


def rotate_theta(v, theta: float) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return math.cos(theta) * v + math.sin(theta) * perp(v)


def ocean_drag_pointwise(U, u, c: float, theta: float) -> np.ndarray:
    """Quadratic turning-angle drag ``c |U-u| (U-u)_theta``."""
    rel = np.asarray(U, dtype=float) - np.asarray(u, dtype=float)
    speed = np.hypot(rel[..., 0], rel[..., 1])
    return c * speed[..., None] * rotate_theta(rel, theta)


def drag_monotone_integrand(a, b, theta: float) -> np.ndarray:
    """Pointwise integrand of the drag monotonicity pairing.

    With ``a = U - u`` and ``b = U - v`` this is
    ``cos(theta)(|a|^3 + |b|^3) - |a| a_theta.b - |b| b_theta.a``,
    i.e. ``(tau(u) - tau(v)).(v - u)`` per unit drag coefficient.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na = np.hypot(a[..., 0], a[..., 1])
    nb = np.hypot(b[..., 0], b[..., 1])
    c, s = math.cos(theta), math.sin(theta)
    cross = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    dot = a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1]
    aa = a[..., 0] * a[..., 0] + a[..., 1] * a[..., 1]
    bb = b[..., 0] * b[..., 0] + b[..., 1] * b[..., 1]
    # perp(a).b = cross(a, b), perp(b).a = -cross(a, b); grouped so a == b cancels exactly
    return c * (na * aa + nb * bb - (na + nb) * dot) - s * cross * (na - nb)


def discriminant_d(S, T) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    T = np.asarray(T, dtype=float)
    one_m = 1.0 - S * S
    return (one_m**2 * T**2
            + (-2.0 * S**2 + 24.0 * S - 18.0) * one_m * T
            + (S**4 + 8.0 * S**3 + 18.0 * S**2 - 27.0))


def rescaled_p(gamma, S, theta: float) -> np.ndarray:
    """Cubic ``gamma^3 - (S + t sinphi) gamma^2 + (-S + t sinphi) gamma + 1``.

    ``S = cos(phi)`` with ``phi`` in ``[0, pi]`` and ``t = tan(theta)``.
    """
    gamma = np.asarray(gamma, dtype=float)
    S = np.asarray(S, dtype=float)
    sin_phi = np.sqrt(np.clip(1.0 - S * S, 0.0, None))
    t = math.tan(theta)
    return gamma**3 - (S + t * sin_phi) * gamma**2 + (-S + t * sin_phi) * gamma + 1.0


@dataclass(frozen=True)
class PhysParams:
    m: float = 1.0
    omega: float = 0.0
    g: float = 9.81

    def __post_init__(self):
        if not self.m > 0:
            raise ValueError(f"mass per area m must be positive, got {self.m}")
        if not self.g > 0:
            raise ValueError(f"gravity g must be positive, got {self.g}")


class NodalSeries:
    """Nodal field sampled at ascending times, piecewise linear in between.

    ``values`` has shape ``(n_times, n_nodes, k)``; pass ``times=None`` and
    a ``(n_nodes, k)`` array for a field constant in time.
    """

    def __init__(self, values, times=None):
        values = np.asarray(values, dtype=float)
        if times is None:
            if values.ndim != 2:
                raise ValueError("constant field must have shape (n_nodes, k)")
            self.times = None
            self.values = values[None]
        else:
            times = np.asarray(times, dtype=float)
            if values.ndim != 3 or values.shape[0] != times.size:
                raise ValueError("values must have shape (n_times, n_nodes, k)")
            if np.any(np.diff(times) <= 0):
                raise ValueError("forcing times must be strictly ascending")
            self.times = times
            self.values = values
        self.values.setflags(write=False)

    @classmethod
    def constant(cls, value, n_nodes: int) -> "NodalSeries":
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(np.broadcast_to(value, (n_nodes, value.size)).copy())

    @property
    def n_nodes(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]

    def at(self, t: float) -> np.ndarray:
        if self.times is None:
            return self.values[0]
        ts = self.times
        if t < ts[0] - 1e-12 * max(1.0, abs(ts[0])) or t > ts[-1] + 1e-12 * max(1.0, abs(ts[-1])):
            raise ValueError(f"time {t} outside forcing range [{ts[0]}, {ts[-1]}]")
        if ts.size == 1:
            return self.values[0]
        k = int(np.clip(np.searchsorted(ts, t, side="right") - 1, 0, ts.size - 2))
        w = (t - ts[k]) / (ts[k + 1] - ts[k])
        w = min(max(w, 0.0), 1.0)
        return (1.0 - w) * self.values[k] + w * self.values[k + 1]


@dataclass
class OceanForcing:
    c_ocean: float
    theta: float
    current: NodalSeries

    def __post_init__(self):
        if self.c_ocean < 0:
            raise ValueError(f"c_ocean must be >= 0, got {self.c_ocean}")
        if not 0.0 <= self.theta <= THETA_MAX:
            raise ValueError(
                f"turning angle theta={self.theta} outside [0, pi/4]; "
                "drag monotonicity is only guaranteed for 0 <= theta <= pi/4")


@dataclass
class BodyForcing:
    """``h = tau_atm - m g grad_H + f_extra``.

    ``analytic`` optionally adds a load given as a function
    ``(t, x, y) -> (hx, hy)``; it is integrated with element quadrature
    instead of nodal lumping.
    """

    tau_atm: Optional[NodalSeries] = None
    grad_H: Optional[NodalSeries] = None
    f_extra: Optional[NodalSeries] = None
    analytic: Optional[Callable] = None

    def nodal(self, t: float, phys: PhysParams, n_nodes: int) -> np.ndarray:
        h = np.zeros((n_nodes, 2))
        if self.tau_atm is not None:
            h += self.tau_atm.at(t)
        if self.grad_H is not None:
            h -= phys.m * phys.g * self.grad_H.at(t)
        if self.f_extra is not None:
            h += self.f_extra.at(t)
        return h


def body_load(t: float, forcing: BodyForcing, phys: PhysParams, n_nodes: int) -> np.ndarray:
    return forcing.nodal(t, phys, n_nodes)


@dataclass
class IceStrengthField:
    P: NodalSeries
    P_floor: float

    def __post_init__(self):
        if not self.P_floor > 0:
            raise ValueError(f"P_floor must be positive, got {self.P_floor}")
        if np.any(self.P.values < self.P_floor):
            raise ValueError(
                f"ice strength below P_floor={self.P_floor} (min {self.P.values.min()})")

    def at(self, t: float) -> np.ndarray:
        return self.P.at(t)[:, 0]


def read_forcing_csv(path, n_nodes: int) -> NodalSeries:
    """Read ``t,node_id,vx,vy`` or ``t,node_id,val`` rows into a series."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        if header == ["t", "node_id", "vx", "vy"]:
            width = 2
        elif header == ["t", "node_id", "val"]:
            width = 1
        else:
            raise ValueError(f"{path}: unexpected header {header}")
        slices: dict[float, np.ndarray] = {}
        order: list[float] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2 + width:
                raise ValueError(f"{path}:{lineno}: expected {2 + width} columns")
            t = float(row[0])
            node = int(row[1])
            if not 0 <= node < n_nodes:
                raise ValueError(f"{path}:{lineno}: node id {node} out of range")
            if t not in slices:
                if order and t < order[-1]:
                    raise ValueError(f"{path}:{lineno}: times must be sorted ascending")
                slices[t] = np.full((n_nodes, width), np.nan)
                order.append(t)
            slices[t][node] = [float(x) for x in row[2:]]
    if not order:
        raise ValueError(f"{path}: no data rows")
    values = np.stack([slices[t] for t in order])
    if np.isnan(values).any():
        raise ValueError(f"{path}: some nodes missing at some times")
    return NodalSeries(values, np.array(order))


def write_forcing_csv(path, series: NodalSeries, times=None) -> None:
    ts = series.times if series.times is not None else np.array([0.0])
    if times is not None:
        ts = np.asarray(times, dtype=float)
    header = ["t", "node_id", "vx", "vy"] if series.width == 2 else ["t", "node_id", "val"]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for t in ts:
            vals = series.at(float(t))
            for i, row in enumerate(vals):
                w.writerow([repr(float(t)), i, *(repr(float(x)) for x in row)])
