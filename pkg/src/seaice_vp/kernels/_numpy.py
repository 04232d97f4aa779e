"""Vectorised numpy reference implementations of the hot kernels."""

import numpy as np


def element_strain(triangles, grads, nodal):
    """Elementwise ``sym grad u`` as ``(nt, 3)`` rows ``(xx, xy, yy)``."""
    u = nodal[triangles]  # (nt, 3, 2)
    G = np.einsum("eac,eai->eci", u, grads)
    out = np.empty((len(triangles), 3))
    out[:, 0] = G[:, 0, 0]
    out[:, 1] = 0.5 * (G[:, 0, 1] + G[:, 1, 0])
    out[:, 2] = G[:, 1, 1]
    return out


def scatter_stress(triangles, grads, areas, stress, n_vertices):
    """Nodal forces ``sum_e area_e * sigma_e grad phi_a`` as ``(nv, 2)``."""
    sx = stress[:, 0, None] * grads[:, :, 0] + stress[:, 1, None] * grads[:, :, 1]
    sy = stress[:, 1, None] * grads[:, :, 0] + stress[:, 2, None] * grads[:, :, 1]
    local = np.stack([sx, sy], axis=-1) * areas[:, None, None]
    out = np.zeros((n_vertices, 2))
    np.add.at(out, triangles.ravel(), local.reshape(-1, 2))
    return out


def _strain_basis(grads):
    # column 2a+c holds (xx, xy, yy) of sym(e_c (x) grad phi_a)
    nt = grads.shape[0]
    B = np.zeros((nt, 3, 6))
    gx, gy = grads[:, :, 0], grads[:, :, 1]
    B[:, 0, 0::2] = gx
    B[:, 1, 0::2] = 0.5 * gy
    B[:, 1, 1::2] = 0.5 * gx
    B[:, 2, 1::2] = gy
    return B


def element_stiffness(grads, areas, weights, lam):
    """Local 6x6 matrices of ``w * area * <D phi_i, D phi_j>_lam``."""
    Q = lam * np.array([[0.5, 0.0, -0.5], [0.0, 2.0, 0.0], [-0.5, 0.0, 0.5]])
    Q = Q + np.array([[1.0, 0.0, 1.0], [0.0, 0.0, 0.0], [1.0, 0.0, 1.0]])
    B = _strain_basis(grads)
    return np.einsum("e,eki,kl,elj->eij", weights * areas, B, Q, B)


def drag_integrand(a, b, cos_t, sin_t):
    na = np.hypot(a[:, 0], a[:, 1])
    nb = np.hypot(b[:, 0], b[:, 1])
    cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    dot = a[:, 0] * b[:, 0] + a[:, 1] * b[:, 1]
    aa = a[:, 0] * a[:, 0] + a[:, 1] * a[:, 1]
    bb = b[:, 0] * b[:, 0] + b[:, 1] * b[:, 1]
    # grouped so that a == b cancels exactly
    return cos_t * (na * aa + nb * bb - (na + nb) * dot) - sin_t * cross * (na - nb)


def drag_scan_worst(a, b, thetas):
    """Most negative scaled drag integrand over all samples and angles.

    Returns ``(worst, sample_index, theta_index)`` where the integrand is
    divided by ``(|a| + |b|)^3``.
    """
    scale = (np.hypot(a[:, 0], a[:, 1]) + np.hypot(b[:, 0], b[:, 1])) ** 3
    scale = np.where(scale > 0, scale, 1.0)
    worst, wi, wk = np.inf, -1, -1
    for k, th in enumerate(thetas):
        v = drag_integrand(a, b, np.cos(th), np.sin(th)) / scale
        i = int(np.argmin(v))
        if v[i] < worst:
            worst, wi, wk = float(v[i]), i, k
    return worst, wi, wk
