"""Numba kernels for the face-flux stencil.

The generic kernels work on flattened arrays with precomputed index maps so one
implementation serves n = 2 and n = 3.  Each output entry is written by
exactly one iteration and the summation order matches the numpy path, so
results do not depend on the thread count.  ``flux_divergence_2d`` fuses the
two steps for n = 2 and is the fast path there.
"""

import numba as nb


@nb.njit(parallel=True, cache=True)
def face_flux(u, K, left, strides, j, h, out):
    """Fluxes ``F^{ij}`` on the j-faces.

    u: (n, N) node values; K: (n, n, n, Nf); left[t]: flat index of the node
    below face t along axis j; strides: node strides; h: spacings;
    out: (n, Nf).
    """
    n = u.shape[0]
    nf = K.shape[3]
    for t in nb.prange(nf):
        p = left[t]
        q = p + strides[j]
        for i in range(n):
            out[i, t] = 0.0
        for k in range(n):
            for m in range(n):
                if k == j:
                    gv = (u[m, q] - u[m, p]) / h[j]
                else:
                    s = strides[k]
                    gv = ((u[m, p + s] - u[m, p - s]) + (u[m, q + s] - u[m, q - s])) * (0.25 / h[k])
                for i in range(n):
                    out[i, t] += K[i, k, m, t] * gv


@nb.njit(parallel=True, cache=True)
def flux_divergence(F, right, fstep, h, out):
    """``sum_j (F[right_j] - F[right_j - fstep_j]) / h_j`` at interior nodes.

    F: (n, total) concatenated face fluxes; right[j, t]: position in F of the
    upper j-face of interior node t; fstep[j]: face-grid stride along j.
    """
    n = F.shape[0]
    nint = out.shape[1]
    for t in nb.prange(nint):
        for i in range(n):
            out[i, t] = 0.0
        for j in range(n):
            fr = right[j, t]
            fl = fr - fstep[j]
            for i in range(n):
                out[i, t] += (F[i, fr] - F[i, fl]) / h[j]


@nb.njit(parallel=True, cache=True)
def flux_divergence_2d(u, K0, K1, h0, h1, out):
    """Fused two-dimensional path: fluxes on the fly, same arithmetic as the
    generic kernels.

    u: (2, nx0, nx1); K0: (2, 2, 2, nx0-1, nx1-2); K1: (2, 2, 2, nx0-2, nx1-1);
    out: (2, nx0-2, nx1-2).
    """
    nx0 = u.shape[1]
    nx1 = u.shape[2]
    c0 = 0.25 / h0
    c1 = 0.25 / h1
    for a in nb.prange(1, nx0 - 1):
        for b in range(1, nx1 - 1):
            acc0 = 0.0
            acc1 = 0.0
            # j = 0: faces (a-1/2, b) and (a+1/2, b); face index along axis 0 is a-1 / a
            fl0 = 0.0
            fl1 = 0.0
            fr0 = 0.0
            fr1 = 0.0
            for side in range(2):
                p = a - 1 + side
                q = p + 1
                f0 = 0.0
                f1 = 0.0
                for m in range(2):
                    g = (u[m, q, b] - u[m, p, b]) / h0
                    f0 += K0[0, 0, m, p, b - 1] * g
                    f1 += K0[1, 0, m, p, b - 1] * g
                for m in range(2):
                    g = ((u[m, p, b + 1] - u[m, p, b - 1]) + (u[m, q, b + 1] - u[m, q, b - 1])) * c1
                    f0 += K0[0, 1, m, p, b - 1] * g
                    f1 += K0[1, 1, m, p, b - 1] * g
                if side == 0:
                    fl0 = f0
                    fl1 = f1
                else:
                    fr0 = f0
                    fr1 = f1
            acc0 += (fr0 - fl0) / h0
            acc1 += (fr1 - fl1) / h0
            for side in range(2):
                p = b - 1 + side
                q = p + 1
                f0 = 0.0
                f1 = 0.0
                for m in range(2):
                    g = ((u[m, a + 1, p] - u[m, a - 1, p]) + (u[m, a + 1, q] - u[m, a - 1, q])) * c0
                    f0 += K1[0, 0, m, a - 1, p] * g
                    f1 += K1[1, 0, m, a - 1, p] * g
                for m in range(2):
                    g = (u[m, a, q] - u[m, a, p]) / h1
                    f0 += K1[0, 1, m, a - 1, p] * g
                    f1 += K1[1, 1, m, a - 1, p] * g
                if side == 0:
                    fl0 = f0
                    fl1 = f1
                else:
                    fr0 = f0
                    fr1 = f1
            acc0 += (fr0 - fl0) / h1
            acc1 += (fr1 - fl1) / h1
            out[0, a - 1, b - 1] = acc0
            out[1, a - 1, b - 1] = acc1
