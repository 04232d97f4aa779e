"""Triangulations and the P1 vector space with zero boundary trace.

Velocity unknowns live only on interior vertices. A DOF vector is a flat
float array of length ``2 * n_interior`` ordered ``(u_x, u_y)`` per
interior vertex; boundary values are zero by construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import kernels
from .rheology import RheologyParams, delta_p, frobenius_sq, trace


class DegenerateElementError(ValueError):
    pass


def _dunavant4():
    a1, b1, w1 = 0.108103018168070, 0.445948490915965, 0.223381589678011
    a2, b2, w2 = 0.816847572980459, 0.091576213509771, 0.109951743655322
    bary = [(a1, b1, b1), (b1, a1, b1), (b1, b1, a1), (a2, b2, b2), (b2, a2, b2), (b2, b2, a2)]
    return np.array(bary), np.array([w1] * 3 + [w2] * 3)


_DUNAVANT4_BARY, _DUNAVANT4_W = _dunavant4()


@dataclass(frozen=True)
class ElementGeometry:
    area: float
    basis_gradients: np.ndarray  # (3, 2)


class TriMesh:
    """Conforming triangulation with counter-clockwise triangles."""

    def __init__(self, vertices, triangles, boundary_mask):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        self.boundary_mask = np.asarray(boundary_mask, dtype=bool)
        nv = len(self.vertices)
        if self.vertices.shape != (nv, 2):
            raise ValueError("vertices must have shape (nv, 2)")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise ValueError("triangles must have shape (nt, 3)")
        if self.boundary_mask.shape != (nv,):
            raise ValueError("boundary_mask must have one flag per vertex")
        if self.triangles.size and (self.triangles.min() < 0 or self.triangles.max() >= nv):
            raise ValueError("triangle references a vertex out of range")
        for a in (self.vertices, self.triangles, self.boundary_mask):
            a.setflags(write=False)
        signed = self._signed_areas()
        bad = np.flatnonzero(signed <= 0)
        if bad.size:
            raise DegenerateElementError(
                f"triangle {bad[0]} has non-positive signed area {signed[bad[0]]}")

    def _signed_areas(self):
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def interior(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_mask)

    @property
    def n_interior(self) -> int:
        return self.interior.size

    @property
    def n_dofs(self) -> int:
        return 2 * self.n_interior

    @cached_property
    def dof_of_vertex(self) -> np.ndarray:
        """Index of the first DOF of each vertex, -1 on the boundary."""
        out = np.full(self.n_vertices, -1, dtype=np.int64)
        out[self.interior] = 2 * np.arange(self.n_interior)
        return out

    @cached_property
    def areas(self) -> np.ndarray:
        return self._signed_areas()

    @cached_property
    def grads(self) -> np.ndarray:
        """Constant P1 basis gradients, shape ``(nt, 3, 2)``."""
        p = self.vertices[self.triangles]
        two_a = 2.0 * self.areas
        g = np.empty((self.n_triangles, 3, 2))
        for a in range(3):
            b, c = (a + 1) % 3, (a + 2) % 3
            # gradient of the hat function at vertex a: rotated opposite edge
            g[:, a, 0] = (p[:, b, 1] - p[:, c, 1]) / two_a
            g[:, a, 1] = (p[:, c, 0] - p[:, b, 0]) / two_a
        return g

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    @cached_property
    def lumped_mass(self) -> np.ndarray:
        """Vertex masses: one third of the area of every adjacent triangle."""
        m = np.zeros(self.n_vertices)
        np.add.at(m, self.triangles.ravel(), np.repeat(self.areas / 3.0, 3))
        return m

    @cached_property
    def dof_mass(self) -> np.ndarray:
        """Lumped mass per DOF."""
        return np.repeat(self.lumped_mass[self.interior], 2)

    @cached_property
    def consistent_mass(self) -> sp.csr_matrix:
        """Scalar P1 consistent mass matrix on all vertices."""
        local = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0
        vals = self.areas[:, None, None] * local
        rows = np.repeat(self.triangles, 3, axis=1)
        cols = np.tile(self.triangles, (1, 3))
        n = self.n_vertices
        return sp.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=(n, n)).tocsr()

    @cached_property
    def laplace_dofs(self) -> sp.csr_matrix:
        """Vector Laplacian on DOFs; ``u @ L @ u = int |grad u|^2``."""
        g = self.grads
        vals = self.areas[:, None, None] * np.einsum("eai,ebi->eab", g, g)
        rows = np.repeat(self.triangles, 3, axis=1)
        cols = np.tile(self.triangles, (1, 3))
        n = self.n_vertices
        scalar = sp.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=(n, n)).tocsr()
        inner = scalar[self.interior][:, self.interior]
        return sp.kron(inner, sp.identity(2), format="csr")

    @cached_property
    def local_dofs(self) -> np.ndarray:
        """Global DOF of local DOF ``2a + c`` per triangle, -1 when constrained."""
        base = self.dof_of_vertex[self.triangles]  # (nt, 3)
        out = np.repeat(base, 2, axis=1)
        out[:, 1::2] += 1
        out[base.repeat(2, axis=1) < 0] = -1
        return out

    @cached_property
    def sparsity(self):
        """Fixed CSR pattern of the vector stiffness matrix.

        Returns ``(indptr, indices, local_map, local_keep, block_map)``:
        entry ``k`` of the flattened ``(nt, 6, 6)`` local matrices with
        ``local_keep[k]`` lands in slot ``local_map[k]``, and the 2x2
        diagonal block of interior vertex ``i`` occupies slots
        ``block_map[i]`` (row-major).
        """
        ld = self.local_dofs
        rows = np.repeat(ld, 6, axis=1).ravel()
        cols = np.tile(ld, (1, 6)).ravel()
        keep = (rows >= 0) & (cols >= 0)
        n = self.n_dofs
        r, c = rows[keep], cols[keep]
        # every interior vertex has its full 2x2 block through any adjacent triangle
        key = np.unique(r * n + c)
        indptr = np.searchsorted(key // n, np.arange(n + 1))
        indices = key % n
        local_map = np.searchsorted(key, r * n + c)
        d = 2 * np.arange(self.n_interior)
        block_keys = np.stack([d * n + d, d * n + d + 1, (d + 1) * n + d, (d + 1) * n + d + 1],
                              axis=1)
        block_map = np.searchsorted(key, block_keys)
        for a in (indptr, indices, local_map, keep, block_map):
            a.setflags(write=False)
        return indptr, indices, local_map, keep, block_map

    @cached_property
    def quadrature(self):
        """Degree-4 six-point rule: ``(points (nt, 6, 2), weights (nt, 6), bary (6, 3))``."""
        bary = _DUNAVANT4_BARY
        pts = np.einsum("qa,eai->eqi", bary, self.vertices[self.triangles])
        return pts, self.areas[:, None] * _DUNAVANT4_W[None, :], bary

    def to_nodal(self, u) -> np.ndarray:
        """Expand a DOF vector to a ``(nv, 2)`` nodal array (zero on the boundary)."""
        u = np.asarray(u, dtype=float)
        if u.shape != (self.n_dofs,):
            raise ValueError(f"DOF vector of length {self.n_dofs} expected, got {u.shape}")
        out = np.zeros((self.n_vertices, 2))
        out[self.interior] = u.reshape(-1, 2)
        return out

    def restrict(self, nodal) -> np.ndarray:
        """Drop boundary values of a ``(nv, 2)`` nodal array."""
        nodal = np.asarray(nodal, dtype=float)
        return np.ascontiguousarray(nodal[self.interior]).ravel()

    def interpolate(self, fn) -> np.ndarray:
        """DOF vector interpolating ``fn(x, y) -> (ux, uy)`` at interior vertices."""
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        vals = np.stack(np.broadcast_arrays(*fn(x, y)), axis=-1)
        return self.restrict(vals)

    def zero(self) -> np.ndarray:
        return np.zeros(self.n_dofs)


def build_rect_mesh(nx: int, ny: int, Lx: float = 1.0, Ly: float = 1.0) -> TriMesh:
    """Structured mesh of ``[0, Lx] x [0, Ly]``, every cell cut along its SW-NE diagonal."""
    if nx < 1 or ny < 1:
        raise ValueError("nx and ny must be >= 1")
    if not (Lx > 0 and Ly > 0):
        raise ValueError("Lx and Ly must be positive")
    xs = np.linspace(0.0, Lx, nx + 1)
    ys = np.linspace(0.0, Ly, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    i, j = i.ravel(), j.ravel()
    v00 = j * (nx + 1) + i
    v10 = v00 + 1
    v01 = v00 + nx + 1
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.empty((2 * nx * ny, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper
    jj, ii = np.divmod(np.arange(len(vertices)), nx + 1)
    boundary = (ii == 0) | (ii == nx) | (jj == 0) | (jj == ny)
    return TriMesh(vertices, triangles, boundary)


def element_geometry(mesh: TriMesh, tri_index: int) -> ElementGeometry:
    if not 0 <= tri_index < mesh.n_triangles:
        raise IndexError(f"triangle index {tri_index} out of range")
    return ElementGeometry(float(mesh.areas[tri_index]), mesh.grads[tri_index].copy())


def sym_gradients(mesh: TriMesh, u) -> np.ndarray:
    """Elementwise symmetric gradients ``(nt, 3)`` of the P1 interpolant of ``u``."""
    return kernels.element_strain(mesh.triangles, mesh.grads, mesh.to_nodal(u))


def element_sym_gradient(mesh: TriMesh, u, tri_index: int) -> np.ndarray:
    nodal = mesh.to_nodal(u)[mesh.triangles[tri_index]]
    g = mesh.grads[tri_index]
    G = nodal.T @ g  # G[c, i] = d u_c / d x_i
    return np.array([G[0, 0], 0.5 * (G[0, 1] + G[1, 0]), G[1, 1]])


def h_norm(mesh: TriMesh, u) -> float:
    """L2 norm with the consistent mass matrix."""
    nodal = mesh.to_nodal(u)
    M = mesh.consistent_mass
    return float(np.sqrt(sum(nodal[:, c] @ (M @ nodal[:, c]) for c in range(2))))


def lumped_h_norm(mesh: TriMesh, u) -> float:
    u = np.asarray(u, dtype=float)
    return float(np.sqrt(np.dot(mesh.dof_mass * u, u)))


def v_norm(mesh: TriMesh, u) -> float:
    """Gradient seminorm, a norm on the zero-trace space."""
    u = np.asarray(u, dtype=float)
    return float(np.sqrt(max(u @ (mesh.laplace_dofs @ u), 0.0)))


def discrete_norms(mesh: TriMesh, u, params: RheologyParams):
    """``(h_norm, v_norm, int delta_p^2(Du), int |div u|)``."""
    Du = sym_gradients(mesh, u)
    a = mesh.areas
    return (h_norm(mesh, u), v_norm(mesh, u),
            float(np.sum(a * delta_p(Du, params) ** 2)),
            float(np.sum(a * np.abs(trace(Du)))))


def sym_gradient_l2_sq(mesh: TriMesh, u) -> float:
    return float(np.sum(mesh.areas * frobenius_sq(sym_gradients(mesh, u))))


def read_mesh(path) -> TriMesh:
    """Read the ASCII format: ``nv nt``, nv lines ``x y b``, nt lines ``i j k``."""
    path = Path(path)
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    try:
        nv, nt = (int(x) for x in lines[0].split())
        vt = np.array([ln.split() for ln in lines[1:1 + nv]], dtype=float).reshape(nv, 3)
        tri = np.array([ln.split() for ln in lines[1 + nv:1 + nv + nt]], dtype=np.int64).reshape(nt, 3)
    except (ValueError, IndexError) as exc:
        raise ValueError(f"{path}: malformed mesh file ({exc})") from exc
    if len(lines) != 1 + nv + nt:
        raise ValueError(f"{path}: expected {1 + nv + nt} non-empty lines, found {len(lines)}")
    return TriMesh(vt[:, :2], tri, vt[:, 2] != 0)


def write_mesh(path, mesh: TriMesh) -> None:
    out = [f"{mesh.n_vertices} {mesh.n_triangles}"]
    out += [f"{x!r} {y!r} {int(b)}" for (x, y), b in zip(mesh.vertices.tolist(), mesh.boundary_mask)]
    out += [f"{i} {j} {k}" for i, j, k in mesh.triangles.tolist()]
    Path(path).write_text("\n".join(out) + "\n")
