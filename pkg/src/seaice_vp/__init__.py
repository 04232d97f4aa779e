"""P1 finite-element solver and property verification for visco-plastic sea ice."""

from .assembly import Problem, apply_operator, assemble_picard_system, pairing
from .forcing import (BodyForcing, IceStrengthField, NodalSeries, OceanForcing, PhysParams)
from .mesh import TriMesh, build_rect_mesh
from .rheology import CutoffMode, RheologyParams, SymTensor2, delta_p, delta_reg, sigma
from .solver import SolverConfig, implicit_euler_step, run_simulation, steady_solve

__version__ = "0.1.0"

__all__ = [
    "BodyForcing", "CutoffMode", "IceStrengthField", "NodalSeries", "OceanForcing",
    "PhysParams", "Problem", "RheologyParams", "SolverConfig", "SymTensor2", "TriMesh",
    "apply_operator", "assemble_picard_system", "build_rect_mesh", "delta_p", "delta_reg",
    "implicit_euler_step", "pairing", "run_simulation", "sigma", "steady_solve",
]
