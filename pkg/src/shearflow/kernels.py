"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise, or when the
environment variable ``SHEARFLOW_PURE_PYTHON`` is set to a non-empty value,
the numpy fallback is used.  Both expose the same four functions.
"""
from __future__ import annotations

import os

import numpy as np

from . import _kernels_py

_compiled = None
if not os.environ.get("SHEARFLOW_PURE_PYTHON"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "compiled" if _compiled is not None else "python"


def backend_module(name: str | None = None):
    """Return the kernel module for ``name`` (``"compiled"``, ``"python"`` or the active one)."""
    name = name or BACKEND
    if name == "python":
        return _kernels_py
    if _compiled is None:
        raise ImportError("compiled kernels are not available")
    return _compiled


def trilinear_contract(T, a):
    if _compiled is not None:
        return _compiled.trilinear_contract(T, np.ascontiguousarray(a, dtype=float))
    return _kernels_py.trilinear_contract(T, a)


def trilinear_assemble(c_omega, p, q):
    args = [np.ascontiguousarray(x, dtype=float) for x in (c_omega, p, q)]
    if _compiled is not None:
        return _compiled.trilinear_assemble(*args)
    return _kernels_py.trilinear_assemble(*args)


def mollified_deriv(r, breakpoints, table, n, nodes, weights, c_bump):
    r = np.ascontiguousarray(r, dtype=float)
    bp = np.ascontiguousarray(breakpoints, dtype=float)
    tab = np.ascontiguousarray(table, dtype=float)
    nd = np.ascontiguousarray(nodes, dtype=float)
    wt = np.ascontiguousarray(weights, dtype=float)
    if _compiled is not None:
        return _compiled.mollified_deriv(r, bp, tab, int(n), nd, wt, float(c_bump))
    return _kernels_py.mollified_deriv(r, bp, tab, int(n), nd, wt, float(c_bump))


def galerkin_rk4(a0, h, nsteps, sample_every, Minv, Lin, F, B, TN, wb, breakpoints, table, n, nodes, weights,
                 c_bump, use_boundary):
    c = lambda x: np.ascontiguousarray(x, dtype=float)
    args = (c(a0), float(h), int(nsteps), int(sample_every), c(Minv), c(Lin), c(F), c(B), c(TN), c(wb),
            c(breakpoints), c(table), int(n), c(nodes), c(weights), float(c_bump), bool(use_boundary))
    if _compiled is not None:
        return _compiled.galerkin_rk4(*args)
    return _kernels_py.galerkin_rk4(*args)
