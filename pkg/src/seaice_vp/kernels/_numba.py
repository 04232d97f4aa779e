"""numba-compiled versions of the hot kernels (same contracts as _numpy)."""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def element_strain(triangles, grads, nodal):
    nt = triangles.shape[0]
    out = np.empty((nt, 3))
    for e in range(nt):
        g00 = g01 = g10 = g11 = 0.0
        for a in range(3):
            v = triangles[e, a]
            ux, uy = nodal[v, 0], nodal[v, 1]
            gx, gy = grads[e, a, 0], grads[e, a, 1]
            g00 += ux * gx
            g01 += ux * gy
            g10 += uy * gx
            g11 += uy * gy
        out[e, 0] = g00
        out[e, 1] = 0.5 * (g01 + g10)
        out[e, 2] = g11
    return out


@njit(cache=True)
def scatter_stress(triangles, grads, areas, stress, n_vertices):
    out = np.zeros((n_vertices, 2))
    for e in range(triangles.shape[0]):
        sxx, sxy, syy = stress[e, 0], stress[e, 1], stress[e, 2]
        ar = areas[e]
        for a in range(3):
            gx, gy = grads[e, a, 0], grads[e, a, 1]
            v = triangles[e, a]
            out[v, 0] += ar * (sxx * gx + sxy * gy)
            out[v, 1] += ar * (sxy * gx + syy * gy)
    return out


@njit(cache=True)
def element_stiffness(grads, areas, weights, lam):
    nt = grads.shape[0]
    out = np.empty((nt, 6, 6))
    B = np.zeros((3, 6))
    for e in range(nt):
        for a in range(3):
            gx, gy = grads[e, a, 0], grads[e, a, 1]
            B[0, 2 * a] = gx
            B[1, 2 * a] = 0.5 * gy
            B[2, 2 * a] = 0.0
            B[0, 2 * a + 1] = 0.0
            B[1, 2 * a + 1] = 0.5 * gx
            B[2, 2 * a + 1] = gy
        w = weights[e] * areas[e]
        for i in range(6):
            xi, yi, ti = B[0, i], B[1, i], B[2, i]
            tri = xi + ti
            hi = 0.5 * (xi - ti)
            for j in range(i, 6):
                xj, yj, tj = B[0, j], B[1, j], B[2, j]
                # lam * dev:dev + tr * tr with dev:dev = 2 h_i h_j + 2 xy_i xy_j
                val = w * (lam * (2.0 * hi * 0.5 * (xj - tj) + 2.0 * yi * yj) + tri * (xj + tj))
                out[e, i, j] = val
                out[e, j, i] = val
    return out


@njit(cache=True)
def drag_integrand(a, b, cos_t, sin_t):
    n = a.shape[0]
    out = np.empty(n)
    for i in range(n):
        na = math.hypot(a[i, 0], a[i, 1])
        nb = math.hypot(b[i, 0], b[i, 1])
        cross = a[i, 0] * b[i, 1] - a[i, 1] * b[i, 0]
        dot = a[i, 0] * b[i, 0] + a[i, 1] * b[i, 1]
        aa = a[i, 0] * a[i, 0] + a[i, 1] * a[i, 1]
        bb = b[i, 0] * b[i, 0] + b[i, 1] * b[i, 1]
        out[i] = cos_t * (na * aa + nb * bb - (na + nb) * dot) - sin_t * cross * (na - nb)
    return out


@njit(cache=True)
def drag_scan_worst(a, b, thetas):
    worst = np.inf
    wi = -1
    wk = -1
    n = a.shape[0]
    for k in range(thetas.shape[0]):
        c = math.cos(thetas[k])
        s = math.sin(thetas[k])
        for i in range(n):
            na = math.hypot(a[i, 0], a[i, 1])
            nb = math.hypot(b[i, 0], b[i, 1])
            scale = (na + nb) ** 3
            if scale == 0.0:
                scale = 1.0
            cross = a[i, 0] * b[i, 1] - a[i, 1] * b[i, 0]
            dot = a[i, 0] * b[i, 0] + a[i, 1] * b[i, 1]
            aa = a[i, 0] * a[i, 0] + a[i, 1] * a[i, 1]
            bb = b[i, 0] * b[i, 0] + b[i, 1] * b[i, 1]
            v = (c * (na * aa + nb * bb - (na + nb) * dot) - s * cross * (na - nb)) / scale
            if v < worst:
                worst = v
                wi = i
                wk = k
    return worst, wi, wk
