# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; see ``_kernels_py`` for the reference semantics."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs

cnp.import_array()


def trilinear_contract(const double[:, :, ::1] T, const double[::1] a):
    cdef Py_ssize_t n = a.shape[0], i, j, k
    cdef double ai, aij
    out_arr = np.zeros(n)
    cdef double[::1] out = out_arr
    with nogil:
        for i in range(n):
            ai = a[i]
            if ai == 0.0:
                continue
            for j in range(n):
                aij = ai * a[j]
                if aij == 0.0:
                    continue
                for k in range(n):
                    out[k] += aij * T[i, j, k]
    return out_arr


def trilinear_assemble(const double[:, ::1] c_omega, const double[:, ::1] p, const double[:, ::1] q):
    cdef Py_ssize_t nq = c_omega.shape[0], n = c_omega.shape[1], x, i, j, k
    cdef double ci, pj, qj, val
    T_arr = np.zeros((n, n, n))
    cdef double[:, :, ::1] T = T_arr
    for x in range(nq):
        for i in range(n):
            ci = c_omega[x, i]
            if ci == 0.0:
                continue
            for j in range(n):
                pj = ci * p[x, j]
                qj = ci * q[x, j]
                for k in range(j + 1, n):
                    val = pj * q[x, k] - qj * p[x, k]
                    T[i, j, k] += val
    for i in range(n):
        for j in range(n):
            for k in range(j + 1, n):
                T[i, k, j] = -T[i, j, k]
    return T_arr


cdef double _moll_point(double ri, const double[::1] breakpoints, const double[:, ::1] table, long n,
                        const double[::1] nodes, const double[::1] weights, double scale,
                        const double[::1] full_w,
                        double[::1] edges) noexcept nogil:
    """Convolution at one point; ``full_w`` caches the kernel weights of an uncut support."""
    cdef Py_ssize_t m = breakpoints.shape[0], nd = table.shape[1], qn = nodes.shape[0]
    cdef Py_ssize_t e, g, d, owner, a, b
    cdef double half = 1.0 / n, lo, hi, width, mid, t, u, s, val, acc, tmp
    edges[0] = -half
    edges[m + 1] = half
    for e in range(m):
        tmp = ri - breakpoints[e]
        if tmp < -half:
            tmp = -half
        elif tmp > half:
            tmp = half
        edges[e + 1] = tmp
    # insertion sort; m is tiny
    for a in range(1, m + 1):
        tmp = edges[a]
        b = a - 1
        while b >= 0 and edges[b] > tmp:
            edges[b + 1] = edges[b]
            b -= 1
        edges[b + 1] = tmp
    acc = 0.0
    for e in range(m + 1):
        lo = edges[e]
        hi = edges[e + 1]
        width = hi - lo
        if width <= 0.0:
            continue
        mid = ri - 0.5 * (lo + hi)
        owner = 0
        while owner < m and mid >= breakpoints[owner]:
            owner += 1
        if lo == -half and hi == half:
            # mirrored node pairs: odd integrands cancel exactly
            for g in range(qn // 2):
                t = full_w[qn // 2 + g]
                s = ri - t
                val = table[owner, nd - 1]
                for d in range(nd - 2, -1, -1):
                    val = val * s + table[owner, d]
                s = ri + t
                tmp = table[owner, nd - 1]
                for d in range(nd - 2, -1, -1):
                    tmp = tmp * s + table[owner, d]
                acc += full_w[g] * (val + tmp)
            continue
        for g in range(qn):
            t = lo + width * nodes[g]
            u = n * t
            if fabs(u) >= 1.0:
                continue
            s = ri - t
            val = table[owner, nd - 1]
            for d in range(nd - 2, -1, -1):
                val = val * s + table[owner, d]
            acc += width * weights[g] * scale * exp(-1.0 / (1.0 - u * u)) * val
    return acc


cdef double[::1] _full_weights(long n, const double[::1] nodes, const double[::1] weights, double scale):
    """Symmetrized rule on the whole support: pair weights, then the positive abscissae."""
    cdef Py_ssize_t g, qn = nodes.shape[0], half_q = qn // 2
    cdef double half = 1.0 / n, width = 2.0 * half, t, u
    out = np.zeros(2 * half_q)
    cdef double[::1] w = out
    for g in range(half_q):
        t = half * (2.0 * nodes[qn - 1 - g] - 1.0)
        u = n * t
        w[half_q + g] = t
        if fabs(u) < 1.0:
            w[g] = 0.5 * width * (weights[g] + weights[qn - 1 - g]) * scale * exp(-1.0 / (1.0 - u * u))
    return w


def mollified_deriv(const double[::1] r, const double[::1] breakpoints, const double[:, ::1] table, long n,
                    const double[::1] nodes, const double[::1] weights, double c_bump):
    cdef Py_ssize_t R = r.shape[0], ir
    cdef double scale = n * c_bump
    cdef double[::1] edges = np.empty(breakpoints.shape[0] + 2)
    cdef double[::1] full_w = _full_weights(n, nodes, weights, scale)
    out_arr = np.empty(R)
    cdef double[::1] out = out_arr
    with nogil:
        for ir in range(R):
            out[ir] = _moll_point(r[ir], breakpoints, table, n, nodes, weights, scale, full_w, edges)
    return out_arr


def galerkin_rk4(const double[::1] a0, double h, long nsteps, long sample_every, const double[:, ::1] Minv,
                 const double[:, ::1] Lin, const double[::1] F, const double[:, :, ::1] B,
                 const double[:, ::1] TN, const double[::1] wb, const double[::1] breakpoints,
                 const double[:, ::1] table, long n, const double[::1] nodes, const double[::1] weights,
                 double c_bump, bint use_boundary):
    """Classical RK4 for ``M a' = F + Lin a - B[a] - TN^T (wb * j_n'(TN a))``."""
    cdef Py_ssize_t N = a0.shape[0], Nb = TN.shape[0], i, j, k, st, stage
    cdef bint conv = B.shape[0] == N
    cdef double scale = n * c_bump, aij, acc
    cdef double[::1] edges = np.empty(breakpoints.shape[0] + 2)
    cdef double[::1] full_w = _full_weights(n, nodes, weights, scale)
    cdef double[::1] a = np.array(a0, dtype=float)
    cdef double[::1] y = np.empty(N)
    cdef double[::1] rhs = np.empty(N)
    cdef double[:, ::1] K = np.empty((4, N))
    cdef double[::1] xi = np.empty(Nb)
    cdef double[4] cstage
    cdef double[4] cw
    cstage[0] = 0.0; cstage[1] = 0.5 * h; cstage[2] = 0.5 * h; cstage[3] = h
    cw[0] = h / 6.0; cw[1] = h / 3.0; cw[2] = h / 3.0; cw[3] = h / 6.0
    nsamp = nsteps // sample_every + 1
    out_arr = np.empty((nsamp, N))
    cdef double[:, ::1] out = out_arr
    out[0, :] = a
    for st in range(1, nsteps + 1):
        for stage in range(4):
            for i in range(N):
                y[i] = a[i] + (cstage[stage] * K[stage - 1, i] if stage > 0 else 0.0)
            for k in range(N):
                acc = F[k]
                for j in range(N):
                    acc += Lin[k, j] * y[j]
                rhs[k] = acc
            if conv:
                for i in range(N):
                    for j in range(N):
                        aij = y[i] * y[j]
                        for k in range(N):
                            rhs[k] -= aij * B[i, j, k]
            if use_boundary:
                for i in range(Nb):
                    acc = 0.0
                    for j in range(N):
                        acc += TN[i, j] * y[j]
                    xi[i] = wb[i] * _moll_point(acc, breakpoints, table, n, nodes, weights, scale, full_w, edges)
                for k in range(N):
                    acc = 0.0
                    for i in range(Nb):
                        acc += TN[i, k] * xi[i]
                    rhs[k] -= acc
            for k in range(N):
                acc = 0.0
                for j in range(N):
                    acc += Minv[k, j] * rhs[j]
                K[stage, k] = acc
        for i in range(N):
            a[i] += cw[0] * K[0, i] + cw[1] * K[1, i] + cw[2] * K[2, i] + cw[3] * K[3, i]
        if st % sample_every == 0:
            out[st // sample_every, :] = a
    return out_arr
