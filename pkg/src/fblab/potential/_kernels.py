"""Compiled kernels for the structured-grid solver.

Unknowns are numbered in lexicographic box order, so the neighbours in the
``-x``, ``-y`` and ``-z`` directions always carry smaller numbers.  The
operator is ``A = L + sum_c G_c^T B_c G_c``: ``L`` is the weighted
7-point Laplacian (edge conductivities, Shortley-Weller cuts folded into
the diagonal) and the second term couples the eight corners of each fully
resolved cell through the off-diagonal entries of ``B``.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# direction order: +x, -x, +y, -y, +z, -z
CONVERGED, MAXITER, INDEFINITE = 0, 1, 2


@njit(cache=True)
def accumulate_edges(cells, bdiag, idx, kn):
    """Add a quarter of each cell's ``B_dd`` to the four cell edges along ``d``."""
    for c in range(cells.shape[0]):
        i0, j0, k0 = cells[c, 0], cells[c, 1], cells[c, 2]
        for d in range(3):
            w = 0.25 * bdiag[c, d]
            for e in range(4):
                # the two free corner offsets of an edge running along d
                u, v = e & 1, (e >> 1) & 1
                if d == 0:
                    a = (i0, j0 + u, k0 + v)
                    b = (i0 + 1, j0 + u, k0 + v)
                elif d == 1:
                    a = (i0 + u, j0, k0 + v)
                    b = (i0 + u, j0 + 1, k0 + v)
                else:
                    a = (i0 + u, j0 + v, k0)
                    b = (i0 + u, j0 + v, k0 + 1)
                na = idx[a[0], a[1], a[2]]
                nb = idx[b[0], b[1], b[2]]
                if na >= 0:
                    kn[na, 2 * d] += w
                if nb >= 0:
                    kn[nb, 2 * d + 1] += w


@njit(cache=True)
def cross_corners(cells, idx):
    out = np.empty((cells.shape[0], 8), dtype=np.int32)
    for c in range(cells.shape[0]):
        for o in range(8):
            out[c, o] = idx[cells[c, 0] + (o & 1), cells[c, 1] + ((o >> 1) & 1), cells[c, 2] + ((o >> 2) & 1)]
    return out


@njit(cache=True)
def _cell_apply(x, out, corners, boff, sign):
    for c in range(corners.shape[0]):
        gx = 0.0
        gy = 0.0
        gz = 0.0
        for o in range(8):
            m = corners[c, o]
            if m >= 0:
                v = x[m]
                gx += (2 * (o & 1) - 1) * v
                gy += (2 * ((o >> 1) & 1) - 1) * v
                gz += (2 * ((o >> 2) & 1) - 1) * v
        gx *= 0.25
        gy *= 0.25
        gz *= 0.25
        bxy, bxz, byz = boff[c, 0], boff[c, 1], boff[c, 2]
        yx = bxy * gy + bxz * gz
        yy = bxy * gx + byz * gz
        yz = bxz * gx + byz * gy
        for o in range(8):
            m = corners[c, o]
            if m >= 0:
                out[m] += sign * 0.25 * ((2 * (o & 1) - 1) * yx + (2 * ((o >> 1) & 1) - 1) * yy
                                         + (2 * ((o >> 2) & 1) - 1) * yz)


@njit(cache=True)
def apply_operator(x, out, diag, nb, off, corners, boff):
    n = x.shape[0]
    for a in range(n):
        s = diag[a] * x[a]
        for d in range(6):
            m = nb[a, d]
            if m >= 0:
                s -= off[a, d] * x[m]
        out[a] = s
    _cell_apply(x, out, corners, boff, 1.0)


@njit(cache=True)
def cell_rhs(values, corners, boff, rhs, out_index):
    """Move the known-corner part of the cross coupling to the right-hand side.

    ``values[c, o]`` holds the fixed value of corner ``o`` (0 for unknowns);
    ``out_index`` gives the unknown number of each corner (-1 when fixed).
    """
    for c in range(corners.shape[0]):
        gx = 0.0
        gy = 0.0
        gz = 0.0
        for o in range(8):
            v = values[c, o]
            gx += (2 * (o & 1) - 1) * v
            gy += (2 * ((o >> 1) & 1) - 1) * v
            gz += (2 * ((o >> 2) & 1) - 1) * v
        gx *= 0.25
        gy *= 0.25
        gz *= 0.25
        bxy, bxz, byz = boff[c, 0], boff[c, 1], boff[c, 2]
        yx = bxy * gy + bxz * gz
        yy = bxy * gx + byz * gz
        yz = bxz * gx + byz * gy
        for o in range(8):
            m = out_index[c, o]
            if m >= 0:
                rhs[m] -= 0.25 * ((2 * (o & 1) - 1) * yx + (2 * ((o >> 1) & 1) - 1) * yy
                                  + (2 * ((o >> 2) & 1) - 1) * yz)


@njit(cache=True)
def sgs(r, z, diag, nb, off):
    """Symmetric Gauss-Seidel on the 7-point part: ``z = (D+U)^-1 D (D+L)^-1 r``."""
    n = r.shape[0]
    for a in range(n):
        s = r[a]
        for d in range(1, 6, 2):
            m = nb[a, d]
            if m >= 0:
                s += off[a, d] * z[m]
        z[a] = s / diag[a]
    for a in range(n - 1, -1, -1):
        s = diag[a] * z[a]
        for d in range(0, 6, 2):
            m = nb[a, d]
            if m >= 0:
                s += off[a, d] * z[m]
        z[a] = s / diag[a]


@njit(cache=True)
def _dot(a, b):
    s = 0.0
    for i in range(a.shape[0]):
        s += a[i] * b[i]
    return s


@njit(cache=True)
def pcg(b, x, diag, nb, off, corners, boff, tol, maxit, history):
    """Preconditioned conjugate gradients; returns ``(status, iterations, rel. residual)``.

    ``history`` receives the relative residual after each iteration.
    """
    n = b.shape[0]
    r = np.empty(n)
    q = np.empty(n)
    z = np.empty(n)
    apply_operator(x, q, diag, nb, off, corners, boff)
    for i in range(n):
        r[i] = b[i] - q[i]
    bnorm = np.sqrt(_dot(b, b))
    if bnorm == 0.0:
        for i in range(n):
            x[i] = 0.0
        return CONVERGED, 0, 0.0
    rel = np.sqrt(_dot(r, r)) / bnorm
    if rel <= tol:
        return CONVERGED, 0, rel
    sgs(r, z, diag, nb, off)
    p = z.copy()
    rz = _dot(r, z)
    for it in range(maxit):
        apply_operator(p, q, diag, nb, off, corners, boff)
        pq = _dot(p, q)
        if not pq > 0.0:
            return INDEFINITE, it, rel
        alpha = rz / pq
        for i in range(n):
            x[i] += alpha * p[i]
            r[i] -= alpha * q[i]
        rel = np.sqrt(_dot(r, r)) / bnorm
        if it < history.shape[0]:
            history[it] = rel
        if rel <= tol:
            return CONVERGED, it + 1, rel
        sgs(r, z, diag, nb, off)
        rz_new = _dot(r, z)
        beta = rz_new / rz
        rz = rz_new
        for i in range(n):
            p[i] = z[i] + beta * p[i]
    return MAXITER, maxit, rel
