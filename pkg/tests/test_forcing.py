import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seaice_vp.forcing import (BodyForcing, IceStrengthField, NodalSeries, OceanForcing,
                               PhysParams, body_load, discriminant_d, drag_monotone_integrand,
                               ocean_drag_pointwise, perp, read_forcing_csv, rescaled_p,
                               rotate_theta, write_forcing_csv)

R2 = math.sqrt(2) / 2
vec = st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)).map(np.array)


def test_perp_examples():
    np.testing.assert_array_equal(perp([1.0, 0.0]), [0.0, 1.0])
    np.testing.assert_array_equal(perp([1.0, 2.0]), [-2.0, 1.0])
    np.testing.assert_array_equal(perp(perp([3.0, 4.0])), [-3.0, -4.0])


@given(v=vec)
def test_perp_orthogonal_exactly(v):
    w = perp(v)
    assert w[0] * v[0] + w[1] * v[1] == 0.0


def test_rotate_theta_examples():
    np.testing.assert_array_equal(rotate_theta([3.0, -1.0], 0.0), [3.0, -1.0])
    np.testing.assert_allclose(rotate_theta([1.0, 0.0], math.pi / 4), [R2, R2])


def test_ocean_drag_examples():
    np.testing.assert_array_equal(ocean_drag_pointwise([1.0, 2.0], [1.0, 2.0], 3.0, 0.5), [0, 0])
    np.testing.assert_allclose(ocean_drag_pointwise([2.0, 0.0], [1.0, 0.0], 1.0, 0.0), [1.0, 0.0])
    np.testing.assert_allclose(ocean_drag_pointwise([1.0, 0.0], [0.0, 0.0], 1.0, math.pi / 4),
                               [R2, R2])


def test_drag_integrand_examples():
    assert drag_monotone_integrand([1.0, 2.0], [1.0, 2.0], 0.3) == pytest.approx(0.0, abs=1e-12)
    assert drag_monotone_integrand([1.0, 0.0], [-1.0, 0.0], 0.0) == pytest.approx(4.0)
    assert drag_monotone_integrand([1.0, 0.0], [0.0, 1.0], math.pi / 4) == pytest.approx(
        math.sqrt(2))


@settings(max_examples=300)
@given(U=vec, u=vec, v=vec, theta=st.floats(0, math.pi / 4))
def test_drag_integrand_is_drag_pairing(U, u, v, theta):
    # integrand(U-u, U-v) = (tau(u) - tau(v)).(v - u) per unit coefficient
    lhs = drag_monotone_integrand(U - u, U - v, theta)
    rhs = (ocean_drag_pointwise(U, u, 1.0, theta) - ocean_drag_pointwise(U, v, 1.0, theta)) @ (v - u)
    scale = (np.linalg.norm(U - u) + np.linalg.norm(U - v)) ** 3
    assert abs(lhs - rhs) <= 1e-12 * scale + 1e-300


def test_discriminant_examples():
    assert discriminant_d(0.0, 1.0) == -44.0
    assert discriminant_d(0.0, 0.5) == -35.75
    for T in (0.0, 0.3, 0.5, 7.0):
        assert discriminant_d(1.0, T) == 0.0


@given(S=st.floats(-1, 1))
def test_discriminant_boundary_polynomial(S):
    expected = 4 * S**4 - 16 * S**3 + 32 * S**2 + 24 * S - 44
    assert discriminant_d(S, 1.0) == pytest.approx(expected, abs=1e-12)


def test_rescaled_p_examples():
    for S in (-1.0, 0.0, 0.4, 1.0):
        assert rescaled_p(0.0, S, 0.5) == 1.0
    g = np.linspace(0, 3, 7)
    np.testing.assert_allclose(rescaled_p(g, 1.0, 0.0), (g - 1) ** 2 * (g + 1), atol=1e-12)
    assert rescaled_p(1.0, 0.0, 0.0) == 2.0


def test_body_load_examples():
    n = 5
    zero = BodyForcing()
    np.testing.assert_array_equal(body_load(0.0, zero, PhysParams(), n), np.zeros((n, 2)))
    gh = BodyForcing(grad_H=NodalSeries.constant([0.2, -0.1], n))
    np.testing.assert_allclose(body_load(0.0, gh, PhysParams(m=1.0, g=1.0), n),
                               np.tile([-0.2, 0.1], (n, 1)))
    tau = BodyForcing(tau_atm=NodalSeries.constant([1.0, 0.0], n))
    np.testing.assert_array_equal(body_load(3.0, tau, PhysParams(), n), np.tile([1.0, 0.0], (n, 1)))


def test_body_load_linear_in_inputs():
    n = 4
    rng = np.random.default_rng(0)
    a, b, c = (rng.standard_normal((n, 2)) for _ in range(3))
    phys = PhysParams(m=2.0, g=3.0)
    full = BodyForcing(NodalSeries(a), NodalSeries(b), NodalSeries(c))
    np.testing.assert_allclose(body_load(0.0, full, phys, n), a - 6.0 * b + c)


def test_nodal_series_interpolates_and_refuses_extrapolation():
    s = NodalSeries(np.array([[[0.0]], [[2.0]]]), np.array([0.0, 1.0]))
    assert s.at(0.25)[0, 0] == pytest.approx(0.5)
    with pytest.raises(ValueError):
        s.at(1.5)
    with pytest.raises(ValueError):
        s.at(-0.1)
    with pytest.raises(ValueError):
        NodalSeries(np.zeros((2, 1, 1)), np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        s.values[0, 0, 0] = 1.0


def test_ocean_theta_bound():
    cur = NodalSeries.constant([0.0, 0.0], 2)
    OceanForcing(1.0, math.pi / 4, cur)
    with pytest.raises(ValueError, match="pi/4"):
        OceanForcing(1.0, 1.0, cur)
    with pytest.raises(ValueError):
        OceanForcing(-1.0, 0.1, cur)


def test_strength_floor():
    with pytest.raises(ValueError):
        IceStrengthField(NodalSeries.constant(0.5, 3), P_floor=1.0)
    with pytest.raises(ValueError):
        IceStrengthField(NodalSeries.constant(0.0, 3), P_floor=0.0)
    np.testing.assert_array_equal(IceStrengthField(NodalSeries.constant(2.0, 3), 1.0).at(0.0),
                                  [2.0, 2.0, 2.0])


def test_forcing_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    vals = rng.standard_normal((3, 4, 2))
    s = NodalSeries(vals, np.array([0.0, 0.5, 1.0]))
    write_forcing_csv(tmp_path / "f.csv", s)
    back = read_forcing_csv(tmp_path / "f.csv", 4)
    np.testing.assert_array_equal(back.times, s.times)
    np.testing.assert_array_equal(back.values, s.values)
    scal = NodalSeries(rng.uniform(1, 2, (4, 1)))
    write_forcing_csv(tmp_path / "p.csv", scal)
    assert read_forcing_csv(tmp_path / "p.csv", 4).width == 1


@pytest.mark.parametrize("body, msg", [
    ("t,node,vx,vy\n", "header"),
    ("t,node_id,val\n0,7,1\n", "out of range"),
    ("t,node_id,val\n1,0,1\n1,1,1\n0,0,1\n0,1,1\n", "sorted"),
    ("t,node_id,val\n0,0,1\n", "missing"),
    ("t,node_id,val\n", "no data"),
])
def test_forcing_csv_errors(tmp_path, body, msg):
    p = tmp_path / "bad.csv"
    p.write_text(body)
    with pytest.raises(ValueError, match=msg):
        read_forcing_csv(p, 2)
