"""Discrete residual and Picard systems for ``m du/dt + A(t)u + Cu + G(t)u = h``.

Quadrature is fixed here: the stress form uses one evaluation per
triangle (exact for P1, with P averaged to the centroid); mass, drag,
Coriolis and nodal loads use vertex lumping, which keeps the discrete drag
pointwise monotone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import kernels
from .forcing import BodyForcing, IceStrengthField, OceanForcing, PhysParams
from .mesh import TriMesh
from .rheology import RheologyParams, delta_reg, sigma


class MeshMismatchError(ValueError):
    pass


@dataclass
class Problem:
    """Everything the operator needs besides the velocity."""

    mesh: TriMesh
    rheology: RheologyParams
    phys: PhysParams
    strength: IceStrengthField
    ocean: Optional[OceanForcing] = None
    body: BodyForcing = field(default_factory=BodyForcing)

    def __post_init__(self):
        nv = self.mesh.n_vertices
        series = [("ice strength", self.strength.P)]
        if self.ocean is not None:
            series.append(("ocean current", self.ocean.current))
        for name in ("tau_atm", "grad_H", "f_extra"):
            s = getattr(self.body, name)
            if s is not None:
                series.append((name, s))
        for name, s in series:
            if s.n_nodes != nv:
                raise MeshMismatchError(f"{name} has {s.n_nodes} nodes, mesh has {nv}")

    def element_strength(self, t: float) -> np.ndarray:
        return self.strength.at(t)[self.mesh.triangles].mean(axis=1)


@dataclass
class OperatorParts:
    a: np.ndarray
    c: np.ndarray
    g: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.a + self.c + self.g


@dataclass
class AssembledSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    a_energy: float
    drag_energy: float


def _check(problem: Problem, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (problem.mesh.n_dofs,):
        raise MeshMismatchError(
            f"velocity has shape {u.shape}, mesh expects ({problem.mesh.n_dofs},)")
    return u


def _rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def _block_diag(blocks: np.ndarray) -> sp.csr_matrix:
    n = len(blocks)
    idx = np.arange(n)
    return sp.bsr_matrix((blocks, idx, np.arange(n + 1)), shape=(2 * n, 2 * n)).tocsr()


def _interior_nodal(mesh: TriMesh, nodal: np.ndarray) -> np.ndarray:
    return nodal[mesh.interior]


def _pressure_offset(P: np.ndarray) -> float:
    """Constant removable from ``P`` in the ``-(P/2) Id`` term.

    ``int div phi_i = 0`` for zero-trace test functions, so subtracting a
    constant changes nothing but round-off; with spatially constant ``P``
    the pressure load then vanishes exactly and rest stays at rest.
    """
    return float(np.median(P)) if P.size else 0.0


def stress_part(problem: Problem, u, t: float) -> np.ndarray:
    """``a(t, u, phi_i)`` for every DOF."""
    mesh = problem.mesh
    Du = kernels.element_strain(mesh.triangles, mesh.grads, mesh.to_nodal(u))
    P = problem.element_strength(t)
    s = sigma(P, Du, problem.rheology)
    c = 0.5 * _pressure_offset(P)
    s[:, 0] += c
    s[:, 2] += c
    forces = kernels.scatter_stress(mesh.triangles, mesh.grads, mesh.areas,
                                    np.ascontiguousarray(s), mesh.n_vertices)
    return mesh.restrict(forces)


def coriolis_part(problem: Problem, u) -> np.ndarray:
    """``c(u, phi_i) = -int m omega u_perp . phi_i`` (lumped)."""
    mesh = problem.mesh
    uu = np.asarray(u, dtype=float).reshape(-1, 2)
    coef = problem.phys.m * problem.phys.omega * mesh.lumped_mass[mesh.interior]
    out = np.empty_like(uu)
    # -coef * (-u_y, u_x)
    out[:, 0] = coef * uu[:, 1]
    out[:, 1] = -coef * uu[:, 0]
    return out.ravel()


def drag_part(problem: Problem, u, t: float) -> np.ndarray:
    """``g(t, u, phi_i) = -int tau_ocean(u) . phi_i`` (lumped)."""
    mesh = problem.mesh
    ocean = problem.ocean
    if ocean is None or ocean.c_ocean == 0.0:
        return np.zeros(mesh.n_dofs)
    U = _interior_nodal(mesh, ocean.current.at(t))
    uu = np.asarray(u, dtype=float).reshape(-1, 2)
    rel = U - uu
    speed = np.hypot(rel[:, 0], rel[:, 1])
    tau = ocean.c_ocean * speed[:, None] * (rel @ _rotation(ocean.theta).T)
    return (-mesh.lumped_mass[mesh.interior, None] * tau).ravel()


def operator_parts(problem: Problem, u, t: float) -> OperatorParts:
    u = _check(problem, u)
    return OperatorParts(stress_part(problem, u, t), coriolis_part(problem, u),
                         drag_part(problem, u, t))


def apply_operator(problem: Problem, u, t: float) -> np.ndarray:
    """Residual vector ``(A(t) + C + G(t)) u`` tested against every basis function."""
    return operator_parts(problem, u, t).total


def load_vector(problem: Problem, t: float) -> np.ndarray:
    """``<h(t), phi_i>``: lumped nodal body forces plus quadrature of analytic loads."""
    mesh = problem.mesh
    h = problem.body.nodal(t, problem.phys, mesh.n_vertices)
    out = mesh.lumped_mass[:, None] * h
    if problem.body.analytic is not None:
        pts, w, bary = mesh.quadrature
        hx, hy = problem.body.analytic(t, pts[..., 0], pts[..., 1])
        fx = np.broadcast_to(hx, w.shape) * w
        fy = np.broadcast_to(hy, w.shape) * w
        local = np.stack([fx @ bary, fy @ bary], axis=-1)  # (nt, 3, 2)
        np.add.at(out, mesh.triangles.ravel(), local.reshape(-1, 2))
    return mesh.restrict(out)


def pairing(r, v) -> float:
    r = np.asarray(r, dtype=float)
    v = np.asarray(v, dtype=float)
    if r.shape != v.shape:
        raise ValueError(f"pairing of shapes {r.shape} and {v.shape}")
    return float(np.dot(r, v))


def _stiffness_data(problem: Problem, u_lag, t: float) -> np.ndarray:
    """Values of the frozen-viscosity stress matrix on ``mesh.sparsity``."""
    mesh = problem.mesh
    Du = kernels.element_strain(mesh.triangles, mesh.grads, mesh.to_nodal(u_lag))
    P = problem.element_strength(t)
    weights = P / (2.0 * delta_reg(Du, problem.rheology))
    local = kernels.element_stiffness(mesh.grads, mesh.areas, np.ascontiguousarray(weights),
                                      problem.rheology.lam)
    indptr, indices, local_map, keep, _ = mesh.sparsity
    return np.bincount(local_map, weights=local.ravel()[keep], minlength=indices.size)


def _pattern_matrix(mesh: TriMesh, data) -> sp.csr_matrix:
    indptr, indices, *_ = mesh.sparsity
    return sp.csr_matrix((data, indices, indptr), shape=(mesh.n_dofs, mesh.n_dofs))


def _pressure_load(problem: Problem, t: float) -> np.ndarray:
    mesh = problem.mesh
    P = problem.element_strength(t)
    iso = np.zeros((mesh.n_triangles, 3))
    iso[:, 0] = iso[:, 2] = 0.5 * (P - _pressure_offset(P))
    return mesh.restrict(kernels.scatter_stress(mesh.triangles, mesh.grads, mesh.areas,
                                                iso, mesh.n_vertices))


def stiffness_matrix(problem: Problem, u_lag, t: float):
    """Frozen-viscosity stress matrix and the pressure load it leaves behind.

    Returns ``(K, pressure)`` with ``stress_part(u) = K(u) u - pressure``.
    """
    u_lag = _check(problem, u_lag)
    return (_pattern_matrix(problem.mesh, _stiffness_data(problem, u_lag, t)),
            _pressure_load(problem, t))


def _coriolis_blocks(problem: Problem) -> np.ndarray:
    mesh = problem.mesh
    coef = problem.phys.m * problem.phys.omega * mesh.lumped_mass[mesh.interior]
    return coef[:, None, None] * np.array([[0.0, 1.0], [-1.0, 0.0]])


def coriolis_matrix(problem: Problem) -> sp.csr_matrix:
    return _block_diag(_coriolis_blocks(problem))


def _drag_blocks(problem: Problem, u_lag, t: float):
    mesh = problem.mesh
    ocean = problem.ocean
    n = mesh.n_interior
    if ocean is None or ocean.c_ocean == 0.0:
        return np.zeros((n, 2, 2)), np.zeros(2 * n)
    U = _interior_nodal(mesh, ocean.current.at(t))
    rel = U - np.asarray(u_lag, dtype=float).reshape(-1, 2)
    k = ocean.c_ocean * np.hypot(rel[:, 0], rel[:, 1]) * mesh.lumped_mass[mesh.interior]
    R = _rotation(ocean.theta)
    return k[:, None, None] * R, (k[:, None] * (U @ R.T)).ravel()


def drag_system(problem: Problem, u_lag, t: float):
    """Drag matrix with ``|U - u_lag|`` frozen, and its load ``c|U-u_lag| U_theta``."""
    blocks, load = _drag_blocks(problem, u_lag, t)
    return _block_diag(blocks), load


def assemble_picard_system(problem: Problem, u_lag, u_prev, t: float,
                           dt: Optional[float]) -> AssembledSystem:
    """Linear system whose solution is the next Picard iterate.

    ``dt=None`` drops the time derivative (steady problem). A fixed point
    ``u = solve(assemble(u))`` satisfies the implicit Euler step exactly.
    All parts share the stiffness pattern, so one CSR build per sweep.
    """
    u_lag = _check(problem, u_lag)
    if dt is not None and not dt > 0:
        raise ValueError(f"time step must be positive, got {dt}")
    mesh = problem.mesh
    block_map = mesh.sparsity[4]
    k_data = _stiffness_data(problem, u_lag, t)
    drag_blocks, drag_load = _drag_blocks(problem, u_lag, t)
    blocks = drag_blocks + _coriolis_blocks(problem)
    rhs = _pressure_load(problem, t) + drag_load + load_vector(problem, t)
    if dt is not None:
        u_prev = _check(problem, u_prev)
        mdt = problem.phys.m / dt * mesh.lumped_mass[mesh.interior]
        blocks[:, 0, 0] += mdt
        blocks[:, 1, 1] += mdt
        rhs = rhs + np.repeat(mdt, 2) * u_prev
    data = k_data.copy()
    np.add.at(data, block_map.ravel(), blocks.reshape(-1))
    K = _pattern_matrix(mesh, k_data)
    a_energy = float(u_lag @ (K @ u_lag))
    uu = u_lag.reshape(-1, 2)
    drag_energy = float(np.einsum("ni,nij,nj->", uu, drag_blocks, uu))
    return AssembledSystem(_pattern_matrix(mesh, data), rhs, a_energy, drag_energy)
