"""Hot inner loops, compiled with numba when available.

Set ``SEAICE_VP_BACKEND=numpy`` to force the pure-numpy path (the default
is ``numba`` whenever it imports). Both paths share one contract and are
cross-checked by the test-suite; :func:`get` returns either explicitly.
"""

import importlib
import os
from types import ModuleType

from . import _numpy

__all__ = ["BACKEND", "get", "available", "element_strain", "scatter_stress",
           "element_stiffness", "drag_integrand", "drag_scan_worst"]


def available() -> list[str]:
    names = ["numpy"]
    try:
        importlib.import_module("numba")
    except ImportError:
        return names
    return names + ["numba"]


def get(name: str) -> ModuleType:
    if name == "numpy":
        return _numpy
    if name == "numba":
        return importlib.import_module("._numba", __name__)
    raise ValueError(f"unknown kernel backend {name!r} (expected 'numba' or 'numpy')")


def _select() -> str:
    requested = os.environ.get("SEAICE_VP_BACKEND", "").strip().lower()
    if requested:
        if requested not in ("numba", "numpy"):
            raise ValueError(f"SEAICE_VP_BACKEND={requested!r}: expected 'numba' or 'numpy'")
        return requested
    return "numba" if "numba" in available() else "numpy"


BACKEND = _select()
_impl = get(BACKEND)

element_strain = _impl.element_strain
scatter_stress = _impl.scatter_stress
element_stiffness = _impl.element_stiffness
drag_integrand = _impl.drag_integrand
drag_scan_worst = _impl.drag_scan_worst
