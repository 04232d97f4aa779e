import numpy as np
import pytest
import scipy.sparse as sp

from seaice_vp.assembly import Problem, apply_operator, load_vector
from seaice_vp.forcing import (BodyForcing, IceStrengthField, NodalSeries, OceanForcing,
                               PhysParams)
from seaice_vp.mesh import build_rect_mesh, sym_gradients, v_norm
from seaice_vp.rheology import RheologyParams, delta_p
from seaice_vp.solver import (LEDGER_COLUMNS, KrylovConvergenceError, PicardConvergenceError,
                              SimulationError, SingularMatrixError, SolverConfig,
                              implicit_euler_step, linear_solve, read_ledger_csv,
                              run_simulation, steady_solve)
from seaice_vp.verify import verification_problem


def _problem(n=8, P=1.0, params=None, c=0.0, U=(0.0, 0.0), theta=0.0, omega=0.0,
             wind=None, P_field=None):
    mesh = build_rect_mesh(n, n)
    nv = mesh.n_vertices
    Pn = NodalSeries(P_field(mesh)[:, None]) if P_field else NodalSeries.constant(P, nv)
    body = BodyForcing(tau_atm=NodalSeries.constant(wind, nv)) if wind is not None else BodyForcing()
    return Problem(mesh, params or RheologyParams(), PhysParams(omega=omega),
                   IceStrengthField(Pn, 0.5 * P), OceanForcing(c, theta,
                                                               NodalSeries.constant(U, nv)), body)


@pytest.mark.parametrize("method", ["sparse_direct", "krylov"])
def test_linear_solve_examples(method):
    cfg = SolverConfig(linear_method=method)
    b = np.array([3.0, -1.0, 2.0])
    np.testing.assert_allclose(linear_solve(sp.identity(3), b, cfg)[0], b)
    x, _ = linear_solve(sp.diags([2.0, 4.0]), np.array([2.0, 8.0]), cfg)
    np.testing.assert_allclose(x, [1.0, 2.0])


@pytest.mark.parametrize("method", ["sparse_direct", "krylov"])
def test_linear_solve_singular(method):
    with pytest.raises(SingularMatrixError):
        linear_solve(sp.csr_matrix((2, 2)), np.ones(2), SolverConfig(linear_method=method))


def test_krylov_nonconvergence_carries_residual():
    rng = np.random.default_rng(0)
    A = sp.csr_matrix(rng.standard_normal((60, 60)) + 60 * np.eye(60))
    A = A + sp.csr_matrix(np.diag(rng.uniform(-1e6, 1e6, 60)))
    cfg = SolverConfig(linear_method="krylov", linear_rtol=1e-14, krylov_maxiter=1,
                       krylov_restart=2)
    with pytest.raises(KrylovConvergenceError) as info:
        linear_solve(A, rng.standard_normal(60), cfg)
    assert info.value.best_residual > 0


@pytest.mark.parametrize("kw", [dict(dt=0), dict(t_end=-1), dict(picard_tol=0),
                                dict(picard_max=0), dict(damping=0), dict(damping=1.5),
                                dict(linear_rtol=0), dict(linear_method="lu")])
def test_config_invariants(kw):
    with pytest.raises(ValueError):
        SolverConfig(**kw)


def test_rest_state_fixed_point():
    p = _problem(P=2.0)
    u, stats = implicit_euler_step(p, p.mesh.zero(), 0.01, SolverConfig())
    assert not np.any(u)
    assert stats.picard_iters == 1


def test_linear_regime_converges_at_second_sweep():
    params = RheologyParams(delta_lo=1.0, delta_hi=10.0)
    p = _problem(params=params, wind=(1e-3, 5e-4))
    u_prev = p.mesh.zero()
    cfg = SolverConfig(dt=0.1)
    u1, _ = implicit_euler_step(p, u_prev, 0.1, cfg)
    assert delta_p(sym_gradients(p.mesh, u1), params).max() < params.delta_lo
    _, stats = implicit_euler_step(p, u_prev, 0.1, cfg)
    assert stats.picard_iters <= 2
    assert stats.increments[-1] <= cfg.picard_tol


def test_large_dt_approaches_steady_state():
    p = verification_problem(8, RheologyParams(delta_lo=1e-3, delta_hi=1e-2), P0=1e-3)
    cfg = SolverConfig(dt=1e8, picard_max=2000)
    steady = steady_solve(p, 0.0, cfg)
    for seed in (0, 1):
        u_prev = np.random.default_rng(seed).standard_normal(p.mesh.n_dofs)
        u, _ = implicit_euler_step(p, u_prev, 0.0, cfg)
        assert v_norm(p.mesh, u - steady) <= 1e-5 * v_norm(p.mesh, steady)


def test_steady_zero_forcing():
    p = _problem(P=1.5)
    assert not np.any(steady_solve(p, 0.0, SolverConfig()))


def test_steady_strength_gradient_drives_flow():
    p = _problem(P=1.0, c=1.0, P_field=lambda m: 1.0 + 0.5 * m.vertices[:, 0])
    cfg = SolverConfig(picard_max=2000)
    u = steady_solve(p, 0.0, cfg)
    assert np.abs(u).max() > 0
    r = apply_operator(p, u, 0.0) - load_vector(p, 0.0)
    # the pressure load -(P/2) div phi is what drives the flow
    scale = np.abs(apply_operator(p, p.mesh.zero(), 0.0)).max()
    assert scale > 0
    assert np.abs(r).max() <= 1e-6 * scale


def test_picard_failure_reports_history():
    p = verification_problem(8, RheologyParams(delta_lo=1e-3, delta_hi=1e-2), P0=1e-3)
    with pytest.raises(PicardConvergenceError) as info:
        implicit_euler_step(p, p.mesh.zero(), 0.01, SolverConfig(dt=0.01, picard_max=1))
    assert len(info.value.increments) == 1


def test_simulation_failure_keeps_ledger(tmp_path):
    p = verification_problem(8, RheologyParams(delta_lo=1e-3, delta_hi=1e-2), P0=1e-3)
    cfg = SolverConfig(dt=0.01, t_end=0.05, picard_max=1)
    with pytest.raises(SimulationError) as info:
        run_simulation(p, p.mesh.zero(), cfg, ledger_path=tmp_path / "l.csv")
    assert (tmp_path / "l.csv").exists()
    assert info.value.ledger.rows == []


def test_zero_scenario_zero_trajectory_and_ledger(tmp_path):
    p = _problem(P=1.0)
    snaps, ledger = run_simulation(p, p.mesh.zero(), SolverConfig(dt=0.1, t_end=1.0),
                                   snapshot_every=5, ledger_path=tmp_path / "l.csv")
    assert [s[0] for s in snaps] == [0, 5, 10]
    assert all(not np.any(s[2]) for s in snaps)
    data = read_ledger_csv(tmp_path / "l.csv")
    assert len(data["step"]) == 10
    for c in LEDGER_COLUMNS[2:7]:
        assert not np.any(data[c])


def test_ledger_csv_format(tmp_path):
    p = verification_problem(6, RheologyParams(delta_lo=1e-3, delta_hi=1e-2), P0=1e-3)
    _, ledger = run_simulation(p, p.mesh.zero(), SolverConfig(dt=0.01, t_end=0.03,
                                                                picard_max=2000),
                               ledger_path=tmp_path / "l.csv")
    text = (tmp_path / "l.csv").read_text().splitlines()
    assert any(ln.startswith("# picard_tol = 1e-08") for ln in text)
    header = next(ln for ln in text if not ln.startswith("#"))
    assert header == ",".join(LEDGER_COLUMNS)
    back = read_ledger_csv(tmp_path / "l.csv")
    np.testing.assert_array_equal(back["kinetic"], ledger.column("kinetic"))


def test_ocean_spinup_monotone_kinetic():
    U = 0.1
    params = RheologyParams(delta_lo=1e-3, delta_hi=1e-2)
    p = _problem(n=8, P=1e-3, params=params, c=1.0, U=(U, 0.0), theta=0.3)
    _, ledger = run_simulation(p, p.mesh.zero(), SolverConfig(dt=0.05, t_end=1.0,
                                                                picard_max=2000))
    k = ledger.column("kinetic")
    assert np.all(np.diff(k) >= 0)
    snaps, _ = run_simulation(p, p.mesh.zero(), SolverConfig(dt=0.05, t_end=1.0,
                                                               picard_max=2000),
                              snapshot_every=20)
    u = snaps[-1][2].reshape(-1, 2)
    assert np.hypot(u[:, 0], u[:, 1]).max() <= U + 1e-8


def test_paired_runs_contract():
    params = RheologyParams(delta_lo=1e-3, delta_hi=1e-2)
    p = verification_problem(8, params, P0=1e-3)
    cfg = SolverConfig(dt=1e-3, t_end=0.02, picard_max=2000)
    rng = np.random.default_rng(0)
    u0 = rng.standard_normal(p.mesh.n_dofs) * 1e-2
    w0 = 1e-3 * rng.standard_normal(p.mesh.n_dofs)
    s1, _ = run_simulation(p, u0, cfg, snapshot_every=1)
    s2, _ = run_simulation(p, u0 + w0, cfg, snapshot_every=1)
    lm = p.mesh.dof_mass
    d = [float(np.sqrt(np.sum(lm * (a[2] - b[2]) ** 2))) for a, b in zip(s1, s2)]
    scale = max(np.sqrt(np.sum(lm * s[2] ** 2)) for s in s1)
    assert all(d[k + 1] <= d[k] + 10 * cfg.picard_tol * scale for k in range(len(d) - 1))
