"""Command-line entry point.

Exit codes: 0 success, 1 solver failure, 2 configuration error,
3 verification failure. Reports go to stdout as one JSON object per line.
"""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Callable

import numpy as np

from . import verify as V
from .cli_io import ScenarioError, dump_scenario, dumps_report, parse_scenario, snapshot
from .rheology import EPS_MODES, UPPER_BOUNDED_MODES, CutoffMode, RheologyParams
from .solver import SimulationError, SolverConfig, SolverError, run_simulation

EXIT_OK, EXIT_SOLVER, EXIT_CONFIG, EXIT_VERIFY = 0, 1, 2, 3

log = logging.getLogger("seaice_vp")


def _emit(obj) -> None:
    print(dumps_report(obj), flush=True)


def _config_error(msg) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return EXIT_CONFIG


def cmd_run(args) -> int:
    try:
        sc = parse_scenario(args.scenario)
        mesh = sc.build_mesh()
        problem = sc.build_problem(mesh)
        u0 = sc.initial_state(mesh)
        cfg = sc.solver
    except (ScenarioError, ValueError, OSError) as exc:
        return _config_error(exc)
    out = sc.out_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{sc.name}_resolved.toml").write_text(dump_scenario(sc))
    ledger_path = out / f"{sc.name}_ledger.csv"

    def on_snapshot(step, t, u):
        snapshot(out / f"{sc.name}_{step:05d}.vtk", problem, u, t)

    try:
        snaps, ledger = run_simulation(problem, u0, cfg, snapshot_every=sc.snapshot_every,
                                       ledger_path=ledger_path, on_snapshot=on_snapshot)
    except SimulationError as exc:
        _emit({"scenario": sc.name, "status": "solver_failure", "error": str(exc),
               "steps_completed": len(exc.ledger.rows), "ledger": ledger_path})
        return EXIT_SOLVER
    balance = V.check_energy_ledger(problem, ledger)
    last = ledger.rows[-1] if ledger.rows else None
    _emit({"scenario": sc.name, "status": "ok", "steps": len(ledger.rows),
           "defaults_applied": sc.defaults_applied, "ledger": ledger_path,
           "snapshots": len(snaps),
           "final_kinetic": last.kinetic if last else 0.0,
           "max_picard_iters": max((r.picard_iters for r in ledger.rows), default=0),
           "energy_balance": balance.to_json()})
    return EXIT_OK


def cmd_mesh_info(args) -> int:
    try:
        sc = parse_scenario(args.scenario)
        mesh = sc.build_mesh()
    except (ScenarioError, ValueError, OSError) as exc:
        return _config_error(exc)
    edges = np.concatenate([mesh.triangles[:, [0, 1]], mesh.triangles[:, [1, 2]],
                            mesh.triangles[:, [2, 0]]])
    lengths = np.linalg.norm(mesh.vertices[edges[:, 0]] - mesh.vertices[edges[:, 1]], axis=1)
    _emit({"scenario": sc.name, "n_vertices": mesh.n_vertices,
           "n_triangles": mesh.n_triangles, "n_interior": mesh.n_interior,
           "n_boundary": int(mesh.boundary_mask.sum()), "n_dofs": mesh.n_dofs,
           "area_total": float(mesh.areas.sum()), "area_min": float(mesh.areas.min()),
           "area_max": float(mesh.areas.max()), "h_max": float(lengths.max()),
           "bbox": [*mesh.vertices.min(axis=0).tolist(), *mesh.vertices.max(axis=0).tolist()]})
    return EXIT_OK


# suite name -> (default samples, runner(samples, seed, params))
def _pointwise(fn):
    return lambda n, seed, params: [fn(n, params, seed)]


def _operator(fn, n_mesh=16):
    return lambda n, seed, params: [fn(V.verification_problem(n_mesh, params), n, seed)]


def _coercivity(n, seed, params):
    if params.mode not in UPPER_BOUNDED_MODES:
        return []
    return [V.check_coercivity(V.verification_problem(16, params), n, seed)]


def _hemicontinuity(n, seed, params):
    if params.mode is CutoffMode.PLASTIC:
        return []
    return [V.check_hemicontinuity(V.verification_problem(16, params), n, seed)]


def _contraction(n, seed, params):
    rp = RheologyParams(delta_lo=1e-3, delta_hi=1e-2, epsilon=params.epsilon,
                        mode=params.mode, e_bar=params.e_bar)
    problem = V.verification_problem(32, rp, P0=1e-3)
    cfg = SolverConfig(dt=1e-3, t_end=n * 1e-3, picard_max=2000)
    return [V.check_contraction(problem, cfg, seed=seed),
            V.check_contraction(problem, cfg, seed=seed, forcing_delta=(2e-3, -1e-3))]


def _energy(n, seed, params):
    rp = RheologyParams(delta_lo=1e-3, delta_hi=1e-2, epsilon=params.epsilon,
                        mode=params.mode, e_bar=params.e_bar)
    problem = V.verification_problem(16, rp, P0=1e-3)
    cfg = SolverConfig(dt=1e-3, t_end=n * 1e-3, picard_max=2000)
    _, ledger = run_simulation(problem, problem.mesh.zero(), cfg)
    return [V.check_energy_ledger(problem, ledger)]


SUITES: dict[str, tuple[int, Callable]] = {
    "yield": (100_000, _pointwise(V.check_yield_identity)),
    "dudv": (100_000, _pointwise(V.check_dudv_identity)),
    "pointwise": (100_000, _pointwise(V.check_pointwise_monotonicity)),
    "profile": (100_000, _pointwise(V.check_scalar_profile)),
    "growth": (100_000, _pointwise(V.check_growth_bound)),
    "continuity": (1000, lambda n, seed, p: [V.check_band_continuity(p, n=n, seed=seed)]
                   if p.mode is CutoffMode.CUTOFF_BOTH else []),
    "discrete": (200, _operator(V.check_discrete_monotonicity)),
    "coercivity": (200, _coercivity),
    "hemicontinuity": (20, _hemicontinuity),
    "coriolis": (100, _operator(V.check_coriolis_skew)),
    "drag": (100_000, lambda n, seed, p: [V.scan_drag_monotonicity(n, 50, seed)]),
    "drag_polynomial": (100_000, lambda n, seed, p: [V.check_drag_polynomial(n, seed)]),
    "drag_coercivity": (100_000, lambda n, seed, p: [V.check_drag_coercivity(n, seed)]),
    "discriminant": (0, lambda n, seed, p: [V.scan_discriminant(1e-3)]),
    "cubic": (200, lambda n, seed, p: [V.check_cubic_root_sign(n, seed)]),
    "energy": (20, _energy),
    "contraction": (20, _contraction),
}


def cmd_verify(args) -> int:
    names = list(SUITES) if args.suite == "all" else args.suite.split(",")
    unknown = [s for s in names if s not in SUITES]
    if unknown:
        return _config_error(f"unknown suite(s) {unknown}; choose from {list(SUITES)}")
    if args.samples is not None and args.samples < 1:
        return _config_error("--samples must be >= 1")
    try:
        params = RheologyParams(mode=args.mode, epsilon=args.epsilon)
    except ValueError as exc:
        return _config_error(exc)
    if params.mode in EPS_MODES and not params.epsilon > 0:
        return _config_error(f"mode {params.mode.value} needs --epsilon > 0")
    failed = False
    for name in names:
        default_n, runner = SUITES[name]
        n = args.samples if args.samples is not None else default_n
        try:
            reports = runner(n, args.seed, params)
        except SolverError as exc:
            _emit({"name": name, "pass": False, "error": str(exc)})
            return EXIT_SOLVER
        for rep in reports:
            _emit(rep.to_json())
            failed |= not rep.passed
    return EXIT_VERIFY if failed else EXIT_OK


def cmd_convergence(args) -> int:
    levels = args.levels
    if len(levels) < 2 or levels != sorted(set(levels)) or levels[0] < 2:
        return _config_error("--levels needs at least two ascending mesh sizes >= 2")
    try:
        rep = V.manufactured_convergence(levels)
    except V.RegimeError as exc:
        return _config_error(exc)
    except SolverError as exc:
        _emit({"name": "manufactured_convergence", "pass": False, "error": str(exc)})
        return EXIT_SOLVER
    ok = rep.observed_order_V >= args.min_order_v and rep.observed_order_H >= args.min_order_h
    _emit({"name": "manufactured_convergence", **rep.to_json(), "pass": ok,
           "thresholds": {"V": args.min_order_v, "H": args.min_order_h}})
    return EXIT_OK if ok else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="seaice-vp",
                                description="Visco-plastic sea-ice momentum solver and "
                                            "property verification.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="time-integrate a scenario")
    r.add_argument("scenario")
    r.set_defaults(func=cmd_run)

    m = sub.add_parser("mesh-info", help="summarise a scenario's mesh")
    m.add_argument("scenario")
    m.set_defaults(func=cmd_mesh_info)

    v = sub.add_parser("verify", help="run property suites")
    v.add_argument("--suite", default="all",
                   help=f"comma-separated subset of {', '.join(SUITES)} (default all)")
    v.add_argument("--samples", type=int, default=None)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--mode", default=CutoffMode.CUTOFF_BOTH.value,
                   choices=[c.value for c in CutoffMode])
    v.add_argument("--epsilon", type=float, default=0.0)
    v.set_defaults(func=cmd_verify)

    c = sub.add_parser("convergence", help="manufactured-solution convergence study")
    c.add_argument("--levels", type=int, nargs="+", default=[8, 16, 32, 64])
    c.add_argument("--min-order-v", type=float, default=0.9)
    c.add_argument("--min-order-h", type=float, default=1.8)
    c.set_defaults(func=cmd_convergence)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors, which is already the config code
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
