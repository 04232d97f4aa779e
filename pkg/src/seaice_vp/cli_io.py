"""Scenario files, VTK snapshots and JSON reports.

A scenario is a TOML document with the sections below; every key is
optional except ``[mesh]`` and ``[rheology]``. Unknown sections or keys
are rejected. File paths are resolved relative to the scenario file.

    [mesh]      nx, ny, Lx, Ly | file
    [rheology]  e_bar, delta_lo, delta_hi, epsilon, mode
    [phys]      m, omega, g
    [ocean]     c_ocean, theta, current = [Ux, Uy] | current_file
    [body]      tau_atm | tau_atm_file, grad_H | grad_H_file, f_extra | f_extra_file,
                analytic = "manufactured_sine", analytic_amplitude
    [strength]  P | P_file, P_floor
    [initial]   u0 = "zero" | u0_file
    [solver]    dt, t_end, picard_tol, picard_max, damping, linear_rtol,
                linear_method, krylov_restart, krylov_maxiter
    [output]    snapshot_every, out_dir
"""

from __future__ import annotations

import copy
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .assembly import Problem
from .forcing import (THETA_MAX, BodyForcing, IceStrengthField, NodalSeries, OceanForcing,
                      PhysParams, read_forcing_csv)
from .mesh import TriMesh, build_rect_mesh, read_mesh, sym_gradients
from .rheology import EPS_MODES, CutoffMode, RheologyParams, delta_p, sigma, yield_lhs
from .solver import LinearMethod, SolverConfig

OUT_DIR_ENV = "SEAICE_VP_OUT_DIR"

ANALYTIC_LOADS = ("manufactured_sine",)


class ScenarioError(ValueError):
    """Malformed or invalid scenario; the message names the offending key."""


# Documented defaults. Physical values are nondimensional placeholders, not
# calibrated sea-ice constants; production runs should set them explicitly.
DEFAULTS: dict[str, dict[str, Any]] = {
    "mesh": {"nx": 16, "ny": 16, "Lx": 1.0, "Ly": 1.0},
    "rheology": {"e_bar": 2.0, "delta_lo": 2e-9, "delta_hi": 2e-4, "epsilon": 0.0,
                 "mode": CutoffMode.CUTOFF_BOTH.value},
    "phys": {"m": 1.0, "omega": 0.0, "g": 9.81},
    "ocean": {"c_ocean": 0.0, "theta": 0.0, "current": [0.0, 0.0]},
    "body": {"tau_atm": [0.0, 0.0], "grad_H": [0.0, 0.0], "f_extra": [0.0, 0.0]},
    "strength": {"P": 1.0, "P_floor": 1e-3},
    "initial": {"u0": "zero"},
    "solver": {"dt": 0.01, "t_end": 1.0, "picard_tol": 1e-8, "picard_max": 200,
               "damping": 1.0, "linear_rtol": 1e-10,
               "linear_method": LinearMethod.SPARSE_DIRECT.value,
               "krylov_restart": 50, "krylov_maxiter": 2000},
    "output": {"snapshot_every": 0, "out_dir": "out"},
}

# keys that may replace a default instead of sitting next to it
ALTERNATIVES = {
    ("mesh", "file"): ("nx", "ny", "Lx", "Ly"),
    ("ocean", "current_file"): ("current",),
    ("body", "tau_atm_file"): ("tau_atm",),
    ("body", "grad_H_file"): ("grad_H",),
    ("body", "f_extra_file"): ("f_extra",),
    ("strength", "P_file"): ("P",),
    ("initial", "u0_file"): ("u0",),
}
EXTRA_KEYS = {("body", "analytic"), ("body", "analytic_amplitude")}
REQUIRED_SECTIONS = ("mesh", "rheology")

_TYPES = {
    ("mesh", "nx"): int, ("mesh", "ny"): int, ("solver", "picard_max"): int,
    ("solver", "krylov_restart"): int, ("solver", "krylov_maxiter"): int,
    ("output", "snapshot_every"): int,
    ("rheology", "mode"): str, ("solver", "linear_method"): str, ("initial", "u0"): str,
    ("output", "out_dir"): str, ("body", "analytic"): str,
}


@dataclass
class Scenario:
    """Validated scenario. ``config`` is the complete, defaulted document."""

    config: dict
    base_dir: Path = field(default=Path("."), compare=False)
    defaults_applied: list[str] = field(default_factory=list, compare=False)
    source: Optional[Path] = field(default=None, compare=False)

    def section(self, name: str) -> dict:
        return self.config[name]

    @property
    def rheology(self) -> RheologyParams:
        r = self.config["rheology"]
        return RheologyParams(e_bar=r["e_bar"], delta_lo=r["delta_lo"], delta_hi=r["delta_hi"],
                              epsilon=r["epsilon"], mode=r["mode"])

    @property
    def phys(self) -> PhysParams:
        return PhysParams(**self.config["phys"])

    @property
    def solver(self) -> SolverConfig:
        return SolverConfig(**self.config["solver"])

    @property
    def snapshot_every(self) -> int:
        return self.config["output"]["snapshot_every"]

    @property
    def out_dir(self) -> Path:
        env = os.environ.get(OUT_DIR_ENV)
        if env:
            return Path(env)
        return self._path(self.config["output"]["out_dir"])

    @property
    def name(self) -> str:
        return self.source.stem if self.source is not None else "scenario"

    def _path(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    def build_mesh(self) -> TriMesh:
        m = self.config["mesh"]
        if "file" in m:
            return read_mesh(self._path(m["file"]))
        return build_rect_mesh(m["nx"], m["ny"], m["Lx"], m["Ly"])

    def _series(self, sec: str, key: str, mesh: TriMesh) -> NodalSeries:
        s = self.config[sec]
        if f"{key}_file" in s:
            series = read_forcing_csv(self._path(s[f"{key}_file"]), mesh.n_vertices)
        else:
            series = NodalSeries.constant(s[key], mesh.n_vertices)
        return series

    def build_problem(self, mesh: Optional[TriMesh] = None) -> Problem:
        mesh = mesh or self.build_mesh()
        rheology, phys = self.rheology, self.phys
        st = self.config["strength"]
        P = self._series("strength", "P", mesh)
        if P.width != 1:
            raise ScenarioError("strength.P_file must hold scalar rows (t,node_id,val)")
        try:
            strength = IceStrengthField(P, st["P_floor"])
        except ValueError as exc:
            raise ScenarioError(f"strength: {exc}") from exc
        oc = self.config["ocean"]
        ocean = OceanForcing(oc["c_ocean"], oc["theta"], self._series("ocean", "current", mesh))
        body_cfg = self.config["body"]
        analytic = None
        if "analytic" in body_cfg:
            analytic = self._analytic(body_cfg, rheology, mesh)
        body = BodyForcing(self._series("body", "tau_atm", mesh),
                           self._series("body", "grad_H", mesh),
                           self._series("body", "f_extra", mesh), analytic)
        for name, s in (("ocean.current", ocean.current), ("body.tau_atm", body.tau_atm),
                        ("body.grad_H", body.grad_H), ("body.f_extra", body.f_extra)):
            if s.width != 2:
                raise ScenarioError(f"{name} must be a vector field (t,node_id,vx,vy)")
        return Problem(mesh, rheology, phys, strength, ocean, body)

    def _analytic(self, body_cfg, rheology, mesh):
        from .verify import ManufacturedSine
        st = self.config["strength"]
        if "P_file" in st:
            raise ScenarioError("body.analytic = manufactured_sine needs a constant strength.P")
        amp = body_cfg.get("analytic_amplitude", 0.25 * rheology.delta_lo / math.pi)
        return ManufacturedSine(amp, st["P"], rheology).load

    def initial_state(self, mesh: TriMesh) -> np.ndarray:
        init = self.config["initial"]
        if "u0_file" in init:
            series = read_forcing_csv(self._path(init["u0_file"]), mesh.n_vertices)
            if series.width != 2:
                raise ScenarioError("initial.u0_file must be a vector field")
            nodal = series.at(series.times[0])
            if np.any(nodal[mesh.boundary_mask] != 0.0):
                raise ScenarioError("initial.u0_file: velocity must vanish on the boundary")
            return mesh.restrict(nodal)
        return mesh.zero()


def _ctx(sec, key=None):
    return f"[{sec}]" if key is None else f"[{sec}] {key}"


def _coerce(sec: str, key: str, val):
    want = _TYPES.get((sec, key))
    if key == "file" or key.endswith("_file"):
        want = str
    if want is str:
        if not isinstance(val, str):
            raise ScenarioError(f"{_ctx(sec, key)}: expected a string, got {val!r}")
        return val
    if want is int:
        if isinstance(val, bool) or not isinstance(val, int):
            raise ScenarioError(f"{_ctx(sec, key)}: expected an integer, got {val!r}")
        return val
    default = DEFAULTS.get(sec, {}).get(key)
    if isinstance(default, list):
        if (not isinstance(val, list) or len(val) != 2
                or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in val)):
            raise ScenarioError(f"{_ctx(sec, key)}: expected a 2-vector [x, y], got {val!r}")
        return [float(v) for v in val]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ScenarioError(f"{_ctx(sec, key)}: expected a number, got {val!r}")
    return float(val)


def normalize_config(raw: dict) -> tuple[dict, list[str]]:
    """Check keys and types, fill defaults; returns ``(config, defaults_applied)``."""
    for sec in raw:
        if sec not in DEFAULTS:
            raise ScenarioError(f"unknown section [{sec}]")
        if not isinstance(raw[sec], dict):
            raise ScenarioError(f"{sec} must be a table")
    for sec in REQUIRED_SECTIONS:
        if sec not in raw:
            raise ScenarioError(f"missing required section [{sec}]")
    config: dict = {}
    applied: list[str] = []
    for sec, defaults in DEFAULTS.items():
        given = raw.get(sec, {})
        allowed = set(defaults) | {k for (s, k) in ALTERNATIVES if s == sec} | {
            k for (s, k) in EXTRA_KEYS if s == sec}
        for key in given:
            if key not in allowed:
                raise ScenarioError(f"{_ctx(sec, key)}: unknown key")
        out = {}
        replaced = set()
        for (s, alt), covers in ALTERNATIVES.items():
            if s == sec and alt in given:
                clash = [c for c in covers if c in given]
                if clash:
                    raise ScenarioError(f"{_ctx(sec, alt)}: conflicts with {clash[0]}")
                replaced.update(covers)
        for key, dval in defaults.items():
            if key in replaced:
                continue
            if key in given:
                out[key] = _coerce(sec, key, given[key])
            else:
                out[key] = copy.deepcopy(dval)
                applied.append(f"{sec}.{key}")
        for key in given:
            if key not in defaults:
                out[key] = _coerce(sec, key, given[key])
        config[sec] = out
    _validate(config)
    return config, applied


def _validate(c: dict) -> None:
    m = c["mesh"]
    if "file" not in m:
        if m["nx"] < 1 or m["ny"] < 1:
            raise ScenarioError("[mesh] nx, ny must be >= 1")
        if not (m["Lx"] > 0 and m["Ly"] > 0):
            raise ScenarioError("[mesh] Lx, Ly must be positive")
    r = c["rheology"]
    modes = [x.value for x in CutoffMode]
    if r["mode"] not in modes:
        raise ScenarioError(f"[rheology] mode: {r['mode']!r} not one of {modes}")
    try:
        RheologyParams(e_bar=r["e_bar"], delta_lo=r["delta_lo"], delta_hi=r["delta_hi"],
                       epsilon=r["epsilon"], mode=r["mode"])
        PhysParams(**c["phys"])
    except ValueError as exc:
        raise ScenarioError(f"[rheology]/[phys]: {exc}") from exc
    if r["mode"] in [x.value for x in EPS_MODES] and not r["epsilon"] > 0:
        raise ScenarioError(f"[rheology] epsilon must be > 0 in mode {r['mode']}")
    oc = c["ocean"]
    if oc["c_ocean"] < 0:
        raise ScenarioError(f"[ocean] c_ocean must be >= 0, got {oc['c_ocean']}")
    if not 0.0 <= oc["theta"] <= THETA_MAX:
        raise ScenarioError(
            f"[ocean] theta = {oc['theta']} outside [0, pi/4]: drag monotonicity "
            "requires 0 <= theta <= pi/4")
    st = c["strength"]
    if not st["P_floor"] > 0:
        raise ScenarioError(f"[strength] P_floor must be > 0, got {st['P_floor']}")
    if "P" in st:
        if not st["P"] > 0:
            raise ScenarioError(f"[strength] P must be > 0 (ice strength bounded below by "
                                f"P_floor > 0), got {st['P']}")
        if st["P"] < st["P_floor"]:
            raise ScenarioError(f"[strength] P = {st['P']} below P_floor = {st['P_floor']}")
    b = c["body"]
    if "analytic" in b and b["analytic"] not in ANALYTIC_LOADS:
        raise ScenarioError(f"[body] analytic: unknown load {b['analytic']!r}, "
                            f"expected one of {list(ANALYTIC_LOADS)}")
    if "analytic_amplitude" in b and "analytic" not in b:
        raise ScenarioError("[body] analytic_amplitude given without analytic")
    init = c["initial"]
    if "u0" in init and init["u0"] != "zero":
        raise ScenarioError(f"[initial] u0 must be \"zero\" or replaced by u0_file, "
                            f"got {init['u0']!r}")
    try:
        SolverConfig(**c["solver"])
    except ValueError as exc:
        raise ScenarioError(f"[solver] {exc}") from exc
    if c["output"]["snapshot_every"] < 0:
        raise ScenarioError("[output] snapshot_every must be >= 0")


def _check_files(sc: Scenario) -> None:
    for sec, body in sc.config.items():
        for key, val in body.items():
            if key == "file" or key.endswith("_file"):
                p = sc._path(val)
                if not p.is_file():
                    raise ScenarioError(f"{_ctx(sec, key)}: file not found: {p}")


def parse_scenario_text(text: str, base_dir=".", source=None) -> Scenario:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"{source or '<text>'}: {exc}") from exc
    config, applied = normalize_config(raw)
    sc = Scenario(config, Path(base_dir), applied, Path(source) if source else None)
    _check_files(sc)
    return sc


def parse_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
    return parse_scenario_text(text, path.parent, path)


def dump_scenario(sc: Scenario) -> str:
    """TOML text that parses back to an equal scenario."""
    return tomli_w.dumps(sc.config)


# -- VTK ----------------------------------------------------------------------

def element_fields(problem: Problem, u, t: float) -> dict[str, np.ndarray]:
    mesh = problem.mesh
    params = problem.rheology
    Du = sym_gradients(mesh, u)
    P = problem.element_strength(t)
    s = sigma(P, Du, params)
    dp = delta_p(Du, params)
    # from the actual stress, not the closed form (delta_p/delta)^2
    ratio = yield_lhs(P, Du, params) / (0.25 * P * P)
    return {"delta_p": dp, "sigma_xx": s[:, 0], "sigma_xy": s[:, 1], "sigma_yy": s[:, 2],
            "yield_lhs_over_quarterP2": ratio}


def write_snapshot(path, mesh: TriMesh, u, P_nodal, cell_fields: dict[str, np.ndarray],
                   title: str = "seaice_vp snapshot") -> None:
    """Legacy VTK ASCII unstructured grid."""
    vel = mesh.to_nodal(u)
    nv, nt = mesh.n_vertices, mesh.n_triangles
    lines = ["# vtk DataFile Version 3.0", title.replace("\n", " ")[:255], "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {nv} double"]
    lines += [f"{x!r} {y!r} 0.0" for x, y in mesh.vertices.tolist()]
    lines.append(f"CELLS {nt} {4 * nt}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles.tolist()]
    lines.append(f"CELL_TYPES {nt}")
    lines += ["5"] * nt
    lines += [f"POINT_DATA {nv}", "VECTORS velocity double"]
    lines += [f"{a!r} {b!r} 0.0" for a, b in vel.tolist()]
    lines += ["SCALARS P double 1", "LOOKUP_TABLE default"]
    lines += [repr(float(v)) for v in np.asarray(P_nodal, dtype=float)]
    lines.append(f"CELL_DATA {nt}")
    for name, vals in cell_fields.items():
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [repr(float(v)) for v in vals]
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass
class VTKData:
    points: np.ndarray
    cells: np.ndarray
    cell_types: np.ndarray
    point_data: dict
    cell_data: dict


def read_vtk(path) -> VTKData:
    """Reader for the subset of legacy VTK that :func:`write_snapshot` emits."""
    tokens = Path(path).read_text().split("\n")
    if not tokens[0].startswith("# vtk DataFile Version"):
        raise ValueError(f"{path}: not a legacy VTK file")
    if tokens[2].strip() != "ASCII":
        raise ValueError(f"{path}: only ASCII supported")
    words = " ".join(tokens[3:]).split()
    pos = 0

    def take(n):
        nonlocal pos
        out = words[pos:pos + n]
        if len(out) != n:
            raise ValueError(f"{path}: truncated file")
        pos += n
        return out

    if take(2) != ["DATASET", "UNSTRUCTURED_GRID"]:
        raise ValueError(f"{path}: expected DATASET UNSTRUCTURED_GRID")
    points = cells = types = None
    pdata, cdata = {}, {}
    current = None
    while pos < len(words):
        kw = take(1)[0]
        if kw == "POINTS":
            n = int(take(2)[0])
            points = np.array(take(3 * n), dtype=float).reshape(n, 3)
        elif kw == "CELLS":
            n, size = map(int, take(2))
            raw = np.array(take(size), dtype=np.int64)
            counts = raw[::4]
            if np.any(counts != 3):
                raise ValueError(f"{path}: only triangles supported")
            cells = raw.reshape(n, 4)[:, 1:]
        elif kw == "CELL_TYPES":
            n = int(take(1)[0])
            types = np.array(take(n), dtype=int)
        elif kw == "POINT_DATA":
            take(1)
            current = pdata
        elif kw == "CELL_DATA":
            take(1)
            current = cdata
        elif kw == "VECTORS":
            name, _ = take(2)
            n = len(points) if current is pdata else len(cells)
            current[name] = np.array(take(3 * n), dtype=float).reshape(n, 3)
        elif kw == "SCALARS":
            name, _, ncomp = take(3)
            if take(2)[0] != "LOOKUP_TABLE":
                raise ValueError(f"{path}: expected LOOKUP_TABLE after SCALARS {name}")
            n = len(points) if current is pdata else len(cells)
            current[name] = np.array(take(n * int(ncomp)), dtype=float)
        else:
            raise ValueError(f"{path}: unexpected keyword {kw!r}")
    return VTKData(points, cells, types, pdata, cdata)


def snapshot(path, problem: Problem, u, t: float) -> None:
    write_snapshot(path, problem.mesh, u, problem.strength.at(t),
                   element_fields(problem, u, t), title=f"t = {t!r}")


def dumps_report(obj) -> str:
    return json.dumps(obj, sort_keys=False, default=_json_default)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")
