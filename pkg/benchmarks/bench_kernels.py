"""Compare the compiled kernels with the numpy fallback on the canonical problem.

Run ``python benchmarks/bench_kernels.py [--repeat R]``.  Each kernel is
timed on both backends with identical inputs; the script also reports the
largest difference between the two results.
"""
from __future__ import annotations

import argparse
import math
import timeit

import numpy as np

from shearflow.geometry import build_basis, build_channel
from shearflow.kernels import backend_module
from shearflow.operators import assemble_operators, build_lift
from shearflow.potential import _gauss01, bump_constant, mollify, pressure_drop


def cases():
    geom = build_channel(2 * math.pi, 1.0)
    basis = build_basis(geom, 4, 6)
    ops = assemble_operators(basis, 1.0, build_lift(1.0, 0.2, geom))
    f, w = basis.quadrature_fields, basis.grid.w
    rng = np.random.default_rng(0)
    a = rng.standard_normal(basis.size)
    jn = mollify(pressure_drop(), 32)
    bps, table = jn._table()
    nodes, weights = _gauss01(jn.quad_points)
    r = np.linspace(-5, 5, 2000)
    Minv = np.linalg.inv(basis.mass_matrix)
    Lin = ops.G_matrix - ops.A_matrix
    c_omega = np.ascontiguousarray(w[:, None] * f.omega)
    return {
        "trilinear_contract": lambda m: m.trilinear_contract(ops.B_tensor, a),
        "trilinear_assemble": lambda m: m.trilinear_assemble(c_omega, f.v1, f.v2),
        "mollified_deriv": lambda m: m.mollified_deriv(r, bps, table, jn.n, nodes, weights, bump_constant()),
        "galerkin_rk4 (200 steps)": lambda m: m.galerkin_rk4(
            a, 1e-4, 200, 200, Minv, Lin, ops.F_vector, ops.B_tensor, basis.trace_normal, basis.bottom_w,
            bps, table, jn.n, nodes, weights, bump_constant(), True),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    try:
        compiled = backend_module("compiled")
    except ImportError:
        compiled = None
    python = backend_module("python")
    print(f"{'kernel':28s} {'python [ms]':>12s} {'compiled [ms]':>14s} {'speedup':>8s} {'max |diff|':>11s}")
    for name, fn in cases().items():
        tp = min(timeit.repeat(lambda: fn(python), number=1, repeat=args.repeat)) * 1e3
        if compiled is None:
            print(f"{name:28s} {tp:12.2f} {'n/a':>14s}")
            continue
        tc = min(timeit.repeat(lambda: fn(compiled), number=1, repeat=args.repeat)) * 1e3
        diff = float(np.max(np.abs(np.asarray(fn(python)) - np.asarray(fn(compiled)))))
        print(f"{name:28s} {tp:12.2f} {tc:14.2f} {tp / tc:8.1f} {diff:11.2e}")


if __name__ == "__main__":
    main()
