"""Implicit Euler in time, Picard (frozen-coefficient) iteration per step."""

from __future__ import annotations

import csv
import enum
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import Problem, assemble_picard_system, load_vector, operator_parts
from .mesh import lumped_h_norm, sym_gradients, v_norm
from .rheology import delta_p, trace

log = logging.getLogger(__name__)


class LinearMethod(str, enum.Enum):
    SPARSE_DIRECT = "sparse_direct"
    KRYLOV = "krylov"


class SolverError(RuntimeError):
    pass


class SingularMatrixError(SolverError):
    pass


class KrylovConvergenceError(SolverError):
    def __init__(self, msg: str, best_residual: float):
        super().__init__(msg)
        self.best_residual = best_residual


class PicardConvergenceError(SolverError):
    def __init__(self, msg: str, increments: list[float]):
        super().__init__(msg)
        self.increments = increments


class SimulationError(SolverError):
    def __init__(self, msg: str, ledger: "EnergyLedger"):
        super().__init__(msg)
        self.ledger = ledger


@dataclass(frozen=True)
class SolverConfig:
    dt: float = 0.01
    t_end: float = 1.0
    picard_tol: float = 1e-8
    picard_max: int = 200
    damping: float = 1.0
    linear_rtol: float = 1e-10
    linear_method: LinearMethod = LinearMethod.SPARSE_DIRECT
    krylov_restart: int = 50
    krylov_maxiter: int = 2000

    def __post_init__(self):
        object.__setattr__(self, "linear_method", LinearMethod(self.linear_method))
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.t_end > 0:
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        if not self.picard_tol > 0:
            raise ValueError("picard_tol must be positive")
        if self.picard_max < 1:
            raise ValueError("picard_max must be >= 1")
        if not 0 < self.damping <= 1:
            raise ValueError(f"damping must lie in (0, 1], got {self.damping}")
        if not self.linear_rtol > 0:
            raise ValueError("linear_rtol must be positive")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


def linear_solve(A, b, cfg: SolverConfig) -> tuple[np.ndarray, int]:
    """Solve ``A x = b`` to ``linear_rtol``; returns ``(x, iterations)``.

    Direct solves count as one iteration plus any refinement sweeps.
    """
    A = sp.csr_matrix(A)
    b = np.asarray(b, dtype=float)
    if A.shape[0] != A.shape[1] or A.shape[0] != b.size:
        raise ValueError(f"matrix {A.shape} incompatible with rhs of length {b.size}")
    if b.size == 0:
        return np.zeros(0), 0
    bnorm = np.linalg.norm(b)
    target = cfg.linear_rtol * bnorm
    if cfg.linear_method is LinearMethod.SPARSE_DIRECT:
        if A.nnz == 0 or not np.any(A.data):
            raise SingularMatrixError("matrix is structurally singular (no nonzeros)")
        try:
            lu = spla.splu(A.tocsc(), permc_spec="MMD_AT_PLUS_A")
        except RuntimeError as exc:
            raise SingularMatrixError(str(exc)) from exc
        x = lu.solve(b)
        its = 1
        for _ in range(3):
            res = b - A @ x
            if not np.all(np.isfinite(x)):
                raise SingularMatrixError("direct solve produced non-finite values")
            if np.linalg.norm(res) <= target:
                break
            x = x + lu.solve(res)
            its += 1
        return x, its

    diag = A.diagonal()
    if np.any(diag == 0):
        raise SingularMatrixError("zero on the diagonal; Jacobi preconditioner undefined")
    M = sp.diags(1.0 / diag)
    count = [0]

    def cb(_):
        count[0] += 1

    x, info = spla.gmres(A, b, rtol=cfg.linear_rtol, atol=0.0, restart=cfg.krylov_restart,
                         maxiter=cfg.krylov_maxiter, M=M, callback=cb,
                         callback_type="pr_norm")
    rnorm = float(np.linalg.norm(b - A @ x))
    if info != 0 or rnorm > target * (1 + 1e-6) + 1e-300:
        raise KrylovConvergenceError(
            f"GMRES did not reach rtol={cfg.linear_rtol} (info={info}, residual={rnorm:.3e})",
            rnorm)
    return x, count[0]


@dataclass
class StepStats:
    picard_iters: int
    linear_iters: int
    increments: list[float] = field(default_factory=list)


def _relative_increment(mesh, new, old) -> float:
    diff = v_norm(mesh, new - old)
    ref = v_norm(mesh, new)
    return diff / ref if ref > 0 else diff


def _picard(problem: Problem, u_start, u_prev, t: float, dt: Optional[float],
            cfg: SolverConfig) -> tuple[np.ndarray, StepStats]:
    u = np.array(u_start, dtype=float)
    damping = cfg.damping
    stats = StepStats(0, 0)
    for k in range(cfg.picard_max):
        system = assemble_picard_system(problem, u, u_prev, t, dt)
        x, its = linear_solve(system.matrix, system.rhs, cfg)
        stats.linear_iters += its
        # measured on the undamped proposal so damping cannot fake convergence
        inc = _relative_increment(problem.mesh, x, u)
        stats.increments.append(inc)
        stats.picard_iters = k + 1
        if inc <= cfg.picard_tol:
            return x, stats
        u = (1.0 - damping) * u + damping * x
        if len(stats.increments) > 1:
            if inc > stats.increments[-2] and damping > 1.0 / 64:
                damping *= 0.5
                log.debug("Picard increment grew at t=%g; damping -> %g", t, damping)
            elif inc < stats.increments[-2]:
                damping = min(cfg.damping, 2.0 * damping)
    raise PicardConvergenceError(
        f"Picard iteration did not converge in {cfg.picard_max} sweeps at t={t} "
        f"(last increment {stats.increments[-1]:.3e})", stats.increments)


def implicit_euler_step(problem: Problem, u_prev, t_next: float, cfg: SolverConfig,
                        u_guess=None) -> tuple[np.ndarray, StepStats]:
    """One backward Euler step ``(m/dt) M (u - u_prev) + F(t_next, u) = h(t_next)``.

    ``u_guess`` only seeds the Picard iteration (default ``u_prev``).
    """
    u_prev = np.asarray(u_prev, dtype=float)
    start = u_prev if u_guess is None else np.asarray(u_guess, dtype=float)
    return _picard(problem, start, u_prev, t_next, cfg.dt, cfg)


def steady_solve(problem: Problem, t: float, cfg: SolverConfig, u_init=None) -> np.ndarray:
    """Picard fixed point of ``F(t, u) = h(t)``."""
    u0 = problem.mesh.zero() if u_init is None else np.asarray(u_init, dtype=float)
    u, _ = _picard(problem, u0, None, t, None, cfg)
    return u


LEDGER_COLUMNS = ("step", "t", "kinetic", "a_dissipation", "drag_power", "coriolis_power",
                  "external_power", "picard_iters", "linear_iters")


@dataclass
class LedgerRow:
    step: int
    t: float
    kinetic: float
    a_dissipation: float
    drag_power: float
    coriolis_power: float
    external_power: float
    picard_iters: int
    linear_iters: int
    # not part of the CSV: implicit-Euler increment dissipation and the balance residual
    increment_dissipation: float = 0.0
    balance_residual: float = 0.0
    balance_scale: float = 0.0
    # (1/(2 delta_hi)) sum P delta_p^2 area - (1/2) sum P |div u| area, and its magnitude
    a_lower_bound: float = 0.0
    a_lower_scale: float = 0.0


@dataclass
class EnergyLedger:
    config: dict
    rows: list[LedgerRow] = field(default_factory=list)

    def write_csv(self, path) -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            for key, val in self.config.items():
                fh.write(f"# {key} = {val}\n")
            w = csv.writer(fh)
            w.writerow(LEDGER_COLUMNS)
            for r in self.rows:
                w.writerow([r.step, *(f"{getattr(r, c):.17g}" for c in LEDGER_COLUMNS[1:7]),
                            r.picard_iters, r.linear_iters])

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])


def read_ledger_csv(path) -> dict[str, np.ndarray]:
    with Path(path).open(newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    if tuple(reader.fieldnames or ()) != LEDGER_COLUMNS:
        raise ValueError(f"unexpected ledger header {reader.fieldnames}")
    rows = list(reader)
    return {c: np.array([float(r[c]) for r in rows]) for c in LEDGER_COLUMNS}


def energy_row(problem: Problem, step: int, t: float, u, u_prev, dt: float,
               stats: StepStats) -> LedgerRow:
    mesh = problem.mesh
    m = problem.phys.m
    parts = operator_parts(problem, u, t)
    h = load_vector(problem, t)
    kinetic = 0.5 * m * lumped_h_norm(mesh, u) ** 2
    kinetic_prev = 0.5 * m * lumped_h_norm(mesh, u_prev) ** 2
    inc = 0.5 * m * lumped_h_norm(mesh, u - u_prev) ** 2 / dt
    a_diss = float(parts.a @ u)
    drag = -float(parts.g @ u)
    cor = float(parts.c @ u)
    ext = float(h @ u)
    rate = (kinetic - kinetic_prev) / dt
    terms = (rate, inc, a_diss, drag, cor, ext)
    residual = rate + inc + a_diss - drag + cor - ext
    Du = sym_gradients(mesh, u)
    weight = problem.element_strength(t) * mesh.areas
    viscous = float(np.sum(weight * delta_p(Du, problem.rheology) ** 2)) / (
        2.0 * problem.rheology.delta_hi)
    div = 0.5 * float(np.sum(weight * np.abs(trace(Du))))
    return LedgerRow(step, t, kinetic, a_diss, drag, cor, ext, stats.picard_iters,
                     stats.linear_iters, inc, residual, float(sum(abs(x) for x in terms)),
                     viscous - div, viscous + div + abs(a_diss))


def run_simulation(problem: Problem, u0, cfg: SolverConfig, snapshot_every: int = 0,
                   ledger_path=None, on_snapshot: Optional[Callable] = None):
    """March from ``t=0`` to ``t_end``.

    Returns ``(snapshots, ledger)`` where ``snapshots`` is a list of
    ``(step, t, u)``; step 0 is always included when ``snapshot_every > 0``.
    """
    u = np.array(u0, dtype=float)
    ledger = EnergyLedger({k: (v.value if isinstance(v, enum.Enum) else v)
                           for k, v in asdict(cfg).items()})
    snapshots = []

    def snap(step, t, vec):
        if snapshot_every and step % snapshot_every == 0:
            snapshots.append((step, t, vec.copy()))
            if on_snapshot is not None:
                on_snapshot(step, t, vec)

    snap(0, 0.0, u)
    u_old = None
    for step in range(1, cfg.n_steps + 1):
        t = step * cfg.dt
        # linear extrapolation seeds Picard; the fixed point does not depend on it
        guess = None if u_old is None else 2.0 * u - u_old
        try:
            u_next, stats = implicit_euler_step(problem, u, t, cfg, guess)
        except SolverError as exc:
            if ledger_path is not None:
                ledger.write_csv(ledger_path)
            raise SimulationError(f"step {step} (t={t}) failed: {exc}", ledger) from exc
        ledger.rows.append(energy_row(problem, step, t, u_next, u, cfg.dt, stats))
        u_old, u = u, u_next
        snap(step, t, u)
    if ledger_path is not None:
        ledger.write_csv(ledger_path)
    return snapshots, ledger
