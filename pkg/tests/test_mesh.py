import math

import numpy as np
import pytest

from seaice_vp.mesh import (DegenerateElementError, TriMesh, build_rect_mesh, discrete_norms,
                            element_geometry, element_sym_gradient, h_norm, read_mesh,
                            sym_gradient_l2_sq, sym_gradients, v_norm, write_mesh)
from seaice_vp.rheology import RheologyParams

REF = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def _single(vertices):
    return TriMesh(vertices, [[0, 1, 2]], [True, True, True])


@pytest.mark.parametrize("nx, ny, nv, nt, ni", [(1, 1, 4, 2, 0), (2, 2, 9, 8, 1),
                                                 (3, 2, 12, 12, 2)])
def test_rect_counts(nx, ny, nv, nt, ni):
    m = build_rect_mesh(nx, ny)
    assert (m.n_vertices, m.n_triangles, m.n_interior) == (nv, nt, ni)
    assert m.n_dofs == 2 * ni
    assert m.areas.sum() == pytest.approx(1.0)


def test_rect_boundary_mask():
    m = build_rect_mesh(4, 3, 2.0, 1.5)
    x, y = m.vertices.T
    on = np.isclose(x, 0) | np.isclose(x, 2.0) | np.isclose(y, 0) | np.isclose(y, 1.5)
    np.testing.assert_array_equal(m.boundary_mask, on)


@pytest.mark.parametrize("args", [(0, 1), (1, 0), (1, 1, 0.0, 1.0), (1, 1, 1.0, -1.0)])
def test_rect_invalid(args):
    with pytest.raises(ValueError):
        build_rect_mesh(*args)


def test_element_geometry_reference():
    g = element_geometry(_single(REF), 0)
    assert g.area == 0.5
    np.testing.assert_allclose(g.basis_gradients, [[-1, -1], [1, 0], [0, 1]])
    shifted = element_geometry(_single(REF + [3.0, -2.0]), 0)
    np.testing.assert_allclose(shifted.basis_gradients, g.basis_gradients)
    scaled = element_geometry(_single(2 * REF), 0)
    assert scaled.area == pytest.approx(2.0)
    np.testing.assert_allclose(scaled.basis_gradients, g.basis_gradients / 2)


def test_basis_gradients_sum_to_zero():
    m = build_rect_mesh(5, 4, 1.3, 0.7)
    np.testing.assert_allclose(m.grads.sum(axis=1), 0.0, atol=1e-12)


def test_degenerate_and_clockwise_rejected():
    with pytest.raises(DegenerateElementError):
        _single([[0, 0], [1, 0], [2, 0]])
    with pytest.raises(DegenerateElementError):
        _single(REF[[0, 2, 1]])


@pytest.mark.parametrize("field, expected", [
    (lambda x, y: (x, 0 * y), [1.0, 0.0, 0.0]),
    (lambda x, y: (y, x), [0.0, 1.0, 0.0]),
    (lambda x, y: (2 * x - y, 3 * y + x), [2.0, 0.0, 3.0]),
])
def test_patch_test_linear_fields(field, expected):
    # the interpolant is exact on elements touching only interior vertices
    m = build_rect_mesh(6, 6)
    u = m.interpolate(field)
    inner = np.flatnonzero(~m.boundary_mask[m.triangles].any(axis=1))
    assert inner.size
    for k in inner:
        np.testing.assert_allclose(element_sym_gradient(m, u, k), expected, atol=1e-12)
    np.testing.assert_allclose(sym_gradients(m, u)[inner], np.tile(expected, (inner.size, 1)),
                               atol=1e-12)


def test_zero_field_norms():
    m = build_rect_mesh(4, 4)
    assert discrete_norms(m, m.zero(), RheologyParams()) == (0.0, 0.0, 0.0, 0.0)
    np.testing.assert_array_equal(element_sym_gradient(m, m.zero(), 3), np.zeros(3))


def test_korn_chain_and_poincare():
    m = build_rect_mesh(8, 8)
    p = RheologyParams()
    rng = np.random.default_rng(5)
    for _ in range(20):
        u = rng.standard_normal(m.n_dofs)
        _, v, dp2, _ = discrete_norms(m, u, p)
        s2 = sym_gradient_l2_sq(m, u)
        assert p.lam * s2 <= dp2 * (1 + 1e-12)
        assert dp2 <= 2 * s2 * (1 + 1e-12)
        assert v > 0


def test_refinement_consistency():
    f = lambda x, y: (np.sin(np.pi * x) * np.sin(np.pi * y), 0 * x)  # noqa: E731
    # |grad f|^2 integrates to pi^2/2, |f|^2 to 1/4
    errs = []
    for n in (8, 16, 32):
        m = build_rect_mesh(n, n)
        u = m.interpolate(f)
        errs.append(abs(v_norm(m, u) - math.pi / math.sqrt(2)))
        assert h_norm(m, u) == pytest.approx(0.5, rel=5e-2)
    assert errs[2] < errs[1] < errs[0]


def test_mesh_file_roundtrip(tmp_path):
    m = build_rect_mesh(3, 2, 1.5, 0.5)
    write_mesh(tmp_path / "m.mesh", m)
    back = read_mesh(tmp_path / "m.mesh")
    np.testing.assert_array_equal(back.vertices, m.vertices)
    np.testing.assert_array_equal(back.triangles, m.triangles)
    np.testing.assert_array_equal(back.boundary_mask, m.boundary_mask)


@pytest.mark.parametrize("text", ["3 1\n0 0 1\n1 0 1\n", "x y\n", "3 1\n0 0 1\n1 0 1\n0 1 1\n0 1\n"])
def test_mesh_file_malformed(tmp_path, text):
    p = tmp_path / "bad.mesh"
    p.write_text(text)
    with pytest.raises(ValueError):
        read_mesh(p)


def test_restrict_and_to_nodal_zero_trace():
    m = build_rect_mesh(4, 4)
    u = np.arange(m.n_dofs, dtype=float)
    nodal = m.to_nodal(u)
    assert np.all(nodal[m.boundary_mask] == 0)
    np.testing.assert_array_equal(m.restrict(nodal), u)


def test_mesh_immutable():
    m = build_rect_mesh(2, 2)
    with pytest.raises(ValueError):
        m.vertices[0, 0] = 5.0
