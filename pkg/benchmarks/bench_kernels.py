"""Times the numba and numpy kernel backends on the same inputs.

    python benchmarks/bench_kernels.py [--n 128] [--repeat 5]

Prints one line per kernel with the best-of-``repeat`` time for each backend
and the speed-up. The first numba call (JIT compilation) is excluded.
"""

import argparse
import math
import time

import numpy as np

from seaice_vp import kernels
from seaice_vp.mesh import build_rect_mesh


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(n, rng):
    mesh = build_rect_mesh(n, n)
    nodal = rng.standard_normal((mesh.n_vertices, 2))
    stress = rng.standard_normal((mesh.n_triangles, 3))
    weights = rng.uniform(0.5, 2.0, mesh.n_triangles)
    a = rng.standard_normal((200_000, 2))
    b = rng.standard_normal((200_000, 2))
    c, s = math.cos(0.4), math.sin(0.4)
    theta = np.linspace(0.0, math.pi / 4, 50)
    return {
        "element_strain": lambda k: k.element_strain(mesh.triangles, mesh.grads, nodal),
        "scatter_stress": lambda k: k.scatter_stress(mesh.triangles, mesh.grads, mesh.areas,
                                                     stress, mesh.n_vertices),
        "element_stiffness": lambda k: k.element_stiffness(mesh.grads, mesh.areas, weights,
                                                           0.5),
        "drag_integrand": lambda k: k.drag_integrand(a, b, c, s),
        "drag_scan_worst(50 theta)": lambda k: k.drag_scan_worst(a, b, theta),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=128, help="mesh cells per side")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    backends = kernels.available()
    if "numba" not in backends:
        print("numba is not importable; only the numpy backend can be timed")
    rng = np.random.default_rng(0)
    print(f"{'kernel':28s}" + "".join(f"{b:>12s}" for b in backends) + "     speed-up")
    for name, run in cases(args.n, rng).items():
        row = {}
        for b in backends:
            k = kernels.get(b)
            run(k)  # warm-up, includes JIT compilation for numba
            row[b] = best_of(lambda: run(k), args.repeat)
        ratio = row["numpy"] / row["numba"] if "numba" in row else float("nan")
        print(f"{name:28s}" + "".join(f"{row[b] * 1e3:10.2f}ms" for b in backends)
              + f"  {ratio:9.1f}x")


if __name__ == "__main__":
    main()
