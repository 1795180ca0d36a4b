"""Pure numpy implementations of the hot kernels.

Same signatures as the compiled ``_kernels`` extension; used when the
extension is unavailable or ``SHEARFLOW_PURE_PYTHON`` is set.
"""
from __future__ import annotations

import numpy as np


def trilinear_contract(T, a):
    """``out[k] = sum_ij a[i] a[j] T[i, j, k]``."""
    n = a.shape[0]
    return a @ (a @ T.reshape(n, n * n)).reshape(n, n)


def trilinear_assemble(c_omega, p, q):
    """``T[i, j, k] = sum_x c_omega[x, i] (p[x, j] q[x, k] - q[x, j] p[x, k])``."""
    n = c_omega.shape[1]
    pq = (p[:, :, None] * q[:, None, :]).reshape(p.shape[0], n * n)
    T = (c_omega.T @ pq).reshape(n, n, n)
    return T - T.transpose(0, 2, 1)


def mollified_deriv(r, breakpoints, table, n, nodes, weights, c_bump):
    """``int rho_n(t) j'(r - t) dt`` for piecewise-polynomial ``j'``.

    ``table[p]`` holds ascending coefficients of ``j'`` on piece ``p``;
    ``nodes``/``weights`` are a Gauss rule on ``[0, 1]`` applied per panel
    (an even node count is assumed).  Points whose support meets no
    breakpoint use mirrored node pairs, so odd integrands cancel exactly.
    """
    r = np.ascontiguousarray(r, dtype=float)
    out = _mollified_cut(r, breakpoints, table, n, nodes, weights, c_bump)
    half = 1.0 / n
    full = np.all(np.abs(r[:, None] - breakpoints[None, :]) >= half, axis=1) if breakpoints.size else \
        np.ones(r.size, dtype=bool)
    if np.any(full):
        q = nodes.shape[0] // 2
        t = half * (2.0 * nodes[::-1][:q] - 1.0)
        u = n * t
        kern = np.where(np.abs(u) < 1.0, np.exp(-1.0 / np.maximum(1.0 - u * u, 1e-300)), 0.0)
        w = 0.5 * (2.0 * half) * (weights[:q] + weights[::-1][:q]) * (n * c_bump) * kern
        rf = r[full]
        owner = np.searchsorted(breakpoints, rf, side="right")
        coef = table[owner]

        def horner(x):
            val = np.zeros_like(x)
            for d in range(table.shape[1] - 1, -1, -1):
                val = val * x + coef[:, d, None]
            return val

        pair = horner(rf[:, None] - t) + horner(rf[:, None] + t)
        acc = np.zeros(rf.size)
        for g in range(q):
            acc = acc + w[g] * pair[:, g]
        out[full] = acc
    return out


def _mollified_cut(r, breakpoints, table, n, nodes, weights, c_bump):
    """Panel-split Gauss evaluation (valid for every ``r``)."""
    half = 1.0 / n
    m = breakpoints.shape[0]
    cuts = np.clip(r[:, None] - breakpoints[None, :], -half, half)
    edges = np.empty((r.size, m + 2))
    edges[:, 0] = -half
    edges[:, 1:-1] = cuts
    edges[:, -1] = half
    edges.sort(axis=1)
    lo, hi = edges[:, :-1], edges[:, 1:]
    width = hi - lo
    t = lo[..., None] + width[..., None] * nodes
    u = n * t
    inside = np.abs(u) < 1.0
    kern = np.zeros_like(t)
    kern[inside] = np.exp(-1.0 / (1.0 - u[inside] ** 2))
    wt = width[..., None] * weights * (n * c_bump) * kern
    owner = np.searchsorted(breakpoints, r[:, None] - 0.5 * (lo + hi), side="right")
    coef = table[owner]  # (R, P, deg+1)
    s = r[:, None, None] - t
    val = np.zeros_like(s)
    for d in range(table.shape[1] - 1, -1, -1):
        val = val * s + coef[:, :, d, None]
    return np.sum(wt * val, axis=(1, 2))


def galerkin_rk4(a0, h, nsteps, sample_every, Minv, Lin, F, B, TN, wb, breakpoints, table, n, nodes, weights,
                 c_bump, use_boundary):
    """Classical RK4 for ``M a' = F + Lin a - B[a] - TN^T (wb * j_n'(TN a))``.

    ``B`` with a leading dimension other than ``len(a0)`` disables convection.
    """
    N = a0.shape[0]
    conv = B.shape[0] == N

    def f(y):
        rhs = F + Lin @ y
        if conv:
            rhs = rhs - trilinear_contract(B, y)
        if use_boundary:
            xi = wb * mollified_deriv(TN @ y, breakpoints, table, n, nodes, weights, c_bump)
            rhs = rhs - TN.T @ xi
        return Minv @ rhs

    a = np.array(a0, dtype=float)
    out = np.empty((nsteps // sample_every + 1, N))
    out[0] = a
    for st in range(1, nsteps + 1):
        k1 = f(a)
        k2 = f(a + 0.5 * h * k1)
        k3 = f(a + 0.5 * h * k2)
        k4 = f(a + h * k3)
        a = a + (h / 6.0 * k1 + h / 3.0 * k2 + h / 3.0 * k3 + h / 6.0 * k4)
        if st % sample_every == 0:
            out[st // sample_every] = a
    return out
