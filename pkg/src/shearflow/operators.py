"""Weak-form operators on the Galerkin space.

With the scalar vorticity ``omega = d v2/d x1 - d v1/d x2`` the convection
form is

    <B(u, w), z> = int omega_u (w1 z2 - w2 z1) dx,

which is antisymmetric in ``(w, z)`` pointwise, so ``<B(u, v), v> = 0``
holds exactly in every quadrature rule.  The lift ``w`` carries the wall
sliding speed and turns the inhomogeneous problem into one for ``v = u - w``
with load ``F`` and linear coupling ``G``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import kernels
from .errors import GeometryMismatch
from .geometry import ChannelGeometry, DivFreeBasis, ModeFields, QuadGrid, channel_grid

__all__ = [
    "LiftField",
    "OperatorSet",
    "build_lift",
    "assemble_operators",
    "dual_norm",
    "boundary_identity_check",
    "lift_bound_radius",
    "lift_bound_violations",
]


@dataclass(frozen=True)
class LiftField:
    """``w(x) = (s * rho(x2 / h0), 0)`` with a smooth bump ``rho``.

    ``rho(t) = exp(1 - 1 / (1 - (t/t0)**2))`` on ``[0, t0)`` and 0 beyond, so
    ``rho(0) = 1``, ``rho'(0) = 0`` and ``0 <= rho <= 1``.
    """

    s: float
    lam: float
    h0: float
    t0: float
    ncut: int = 64

    @property
    def support_height(self) -> float:
        """Physical height above which ``w`` vanishes."""
        return self.h0 * self.t0

    @property
    def is_zero(self) -> bool:
        return self.s == 0.0

    def profile(self, t):
        """Bump ``rho`` and its derivative at ``t = x2 / h0``."""
        u = np.asarray(t, dtype=float) / self.t0
        inside = np.abs(u) < 1.0
        rho = np.zeros_like(u)
        drho = np.zeros_like(u)
        ui = u[inside]
        gap = 1.0 - ui * ui
        rho[inside] = np.exp(1.0 - 1.0 / gap)
        drho[inside] = rho[inside] * (-2.0 * ui / (self.t0 * gap * gap))
        return rho, drho

    def w1(self, x2):
        return self.s * self.profile(np.asarray(x2) / self.h0)[0]

    def dw1_dx2(self, x2):
        return self.s * self.profile(np.asarray(x2) / self.h0)[1] / self.h0

    def omega(self, x2):
        """Scalar vorticity ``-d w1 / d x2``."""
        return -self.dw1_dx2(x2)

    def fields(self, x1, x2) -> ModeFields:
        """Lift as a one-column :class:`ModeFields`."""
        x2 = np.asarray(x2, dtype=float).ravel()
        z = np.zeros((x2.size, 1))
        return ModeFields(v1=self.w1(x2)[:, None], v2=z, d1v1=z, d2v1=self.dw1_dx2(x2)[:, None],
                          d1v2=z, d2v2=z)

    def key(self) -> dict:
        return {"s": self.s, "lambda": self.lam, "h0": self.h0, "t0": self.t0, "bump": "exp(1-1/(1-u^2))",
                "ncut": self.ncut}


def build_lift(s: float, lam: float, geom: ChannelGeometry, ncut: int = 64) -> LiftField:
    """Lift with support ``t0 = min(lam / (2|s|), h0, 1)`` (``min(h0, 1)`` when ``s = 0``)."""
    if not lam > 0:
        raise ValueError(f"lift smallness must be positive, got {lam}")
    s = float(s)
    t0 = min(geom.h0, 1.0) if s == 0.0 else min(lam / (2.0 * abs(s)), geom.h0, 1.0)
    return LiftField(s, float(lam), geom.h0, t0, ncut)


def _trilinear_density(om_u, w1, w2, z1, z2):
    return om_u * (w1 * z2 - w2 * z1)


@dataclass(eq=False)
class OperatorSet:
    """Assembled Galerkin operators in the working basis of ``basis``.

    ``G1[k, i] = <B(v_i, w), v_k>`` and ``G2[k, i] = <B(w, v_i), v_k>``;
    ``G_matrix = -(G1 + G2)`` so that ``<G(v), v_k> = (G_matrix @ a)[k]``.
    """

    basis: DivFreeBasis
    nu: float
    lift: LiftField
    A_matrix: np.ndarray
    F_vector: np.ndarray
    G1: np.ndarray
    G2: np.ndarray
    B_tensor: np.ndarray | None
    grid: QuadGrid
    grid_fields: ModeFields = field(repr=False)
    lift_grid: QuadGrid = field(repr=False)
    F_dual_norm: float = 0.0

    @property
    def G_matrix(self) -> np.ndarray:
        return -(self.G1 + self.G2)

    @property
    def size(self) -> int:
        return self.basis.size

    @property
    def trace_normal(self) -> np.ndarray:
        return self.basis.trace_normal

    @property
    def boundary_weights(self) -> np.ndarray:
        return self.basis.bottom_w

    def normal_trace(self, a) -> np.ndarray:
        """``v_N`` at the bottom quadrature nodes."""
        return self.basis.trace_normal @ a

    def boundary_load(self, xi) -> np.ndarray:
        """``(xi, z_N)_{L2(Gamma_0)}`` for every basis function ``z``."""
        return self.basis.trace_normal.T @ (self.basis.bottom_w * xi)

    def B_apply(self, a) -> np.ndarray:
        """``<B[v], v_k>`` for the field with coefficients ``a``."""
        a = np.ascontiguousarray(a, dtype=float)
        if self.B_tensor is not None:
            return kernels.trilinear_contract(self.B_tensor, a)
        return self.B_apply_quadrature(a)

    def B_apply_quadrature(self, a) -> np.ndarray:
        """Matrix-free ``<B[v], v_k>`` by direct quadrature contraction."""
        f, w = self.grid_fields, self.grid.w
        om, v1, v2 = f.omega @ a, f.v1 @ a, f.v2 @ a
        c = w * om
        return f.v2.T @ (c * v1) - f.v1.T @ (c * v2)

    def B_form(self, u, v, z) -> float:
        """``<B(u, v), z>`` for coefficient vectors."""
        f, w = self.grid_fields, self.grid.w
        return float(np.sum(w * _trilinear_density(f.omega @ u, f.v1 @ v, f.v2 @ v, f.v1 @ z, f.v2 @ z)))

    def G_apply(self, a) -> np.ndarray:
        return -(self.G1 @ a + self.G2 @ a)

    def key(self) -> dict:
        return {**self.basis.key(), "nu": self.nu, **self.lift.key(), "dense": self.B_tensor is not None}


def assemble_operators(basis: DivFreeBasis, nu: float, lift: LiftField,
                       dense_limit: int = 150) -> OperatorSet:
    """Assemble ``A``, ``B``, ``F`` and ``G`` by quadrature.

    The convection tensor is stored densely (``N**3`` entries) up to
    ``dense_limit`` modes; beyond that ``B_apply`` contracts on the fly.
    """
    geom = basis.geometry
    if not np.isclose(lift.h0, geom.h0, rtol=0, atol=1e-14):
        raise GeometryMismatch(f"lift built for h0={lift.h0}, basis has h0={geom.h0}",
                               witness=[lift.h0, geom.h0])
    if not nu > 0:
        raise ValueError(f"viscosity must be positive, got {nu}")
    grid = basis.grid
    f = basis.quadrature_fields
    A = nu * basis.stiffness_matrix
    B = None
    if basis.size <= dense_limit:
        B = kernels.trilinear_assemble(grid.w[:, None] * f.omega, f.v1, f.v2)

    # lift terms need the support edge resolved as a panel boundary
    lgrid = channel_grid(geom, basis.nx, basis.neta, cuts=[lift.support_height], ncut=lift.ncut)
    lf = basis.fields(lgrid.x1, lgrid.x2)
    W = lgrid.w
    w1 = lift.w1(lgrid.x2)
    om_w = lift.omega(lgrid.x2)
    F = nu * (lf.omega.T @ (W * om_w)) - lf.v2.T @ (W * om_w * w1)
    G1 = (lf.v2 * (W * w1)[:, None]).T @ lf.omega
    G2 = (lf.v2 * (W * om_w)[:, None]).T @ lf.v1 - (lf.v1 * (W * om_w)[:, None]).T @ lf.v2
    ops = OperatorSet(basis, float(nu), lift, A, F, G1, G2, B, grid, f, lgrid)
    ops.F_dual_norm = dual_norm(F, basis)
    return ops


def dual_norm(load, basis: DivFreeBasis) -> float:
    """``sqrt(load^T S^{-1} load)``: Riesz norm of a functional in the discrete V-inner product."""
    load = np.asarray(load, dtype=float)
    if not np.any(load):
        return 0.0
    c = linalg.cho_factor(basis.stiffness_matrix)
    return float(np.sqrt(max(load @ linalg.cho_solve(c, load), 0.0)))


def lift_bound_radius(ops: OperatorSet) -> float:
    """Spectral radius of ``sym(G1)`` relative to the stiffness matrix.

    This is the best constant in ``|<B(v, w), v>| <= c ||v||**2`` over the span.
    """
    S = 0.5 * (ops.G1 + ops.G1.T)
    vals = linalg.eigh(S, ops.basis.stiffness_matrix, eigvals_only=True)
    return float(np.max(np.abs(vals)))


def lift_bound_violations(ops: OperatorSet, draws: int = 1000, rng=None, lam: float | None = None) -> int:
    """Count random coefficient vectors with ``|<B(v, w), v>| > lam ||v||**2``."""
    rng = np.random.default_rng(rng)
    lam = ops.lift.lam if lam is None else lam
    count = 0
    for _ in range(draws):
        a = rng.standard_normal(ops.size)
        form = abs(a @ ops.G1 @ a)
        if form > lam * (a @ ops.basis.stiffness_matrix @ a):
            count += 1
    return count


@dataclass
class IdentityReport:
    interior_residual: float
    boundary_residual: float
    samples: int

    @property
    def max_residual(self) -> float:
        return max(self.interior_residual, self.boundary_residual)

    def to_dict(self) -> dict:
        return {"interior_residual": self.interior_residual, "boundary_residual": self.boundary_residual,
                "samples": self.samples}


def _convective(f: ModeFields, a, b, c):
    """``int (a . grad) b . c`` density at the nodes, all coefficient vectors."""
    a1, a2 = f.v1 @ a, f.v2 @ a
    return (a1 * (f.d1v1 @ b) + a2 * (f.d2v1 @ b)) * (f.v1 @ c) + (a1 * (f.d1v2 @ b) + a2 * (f.d2v2 @ b)) * (f.v2 @ c)


def boundary_identity_check(ops: OperatorSet, samples=10, rng=None) -> IdentityReport:
    """Check both integration-by-parts forms of the convection term.

    For each pair ``(v, z)`` it compares ``<B[v], z>`` with

    * ``int (z.grad)v.v - int (v.grad)z.v`` (interior form), and
    * ``1/2 int_{Gamma_0} v_N**2 z_N - int (v.grad)z.v`` (boundary form).

    ``samples`` is either a count of random unit pairs or an explicit list of
    ``(v, z)`` coefficient pairs.
    """
    basis = ops.basis
    if isinstance(samples, int):
        rng = np.random.default_rng(rng)
        pairs = []
        for _ in range(samples):
            v, z = rng.standard_normal(ops.size), rng.standard_normal(ops.size)
            pairs.append((v / basis.norm_V(v), z / basis.norm_V(z)))
    else:
        pairs = list(samples)
    f, w = ops.grid_fields, ops.grid.w
    r_int = r_bnd = 0.0
    for v, z in pairs:
        lhs = float(ops.B_apply(v) @ z)
        zvv = float(np.sum(w * _convective(f, z, v, v)))
        vzv = float(np.sum(w * _convective(f, v, z, v)))
        vn, zn = basis.trace_normal @ v, basis.trace_normal @ z
        bnd = 0.5 * float(np.sum(basis.bottom_w * vn * vn * zn))
        r_int = max(r_int, abs(lhs - (zvv - vzv)))
        r_bnd = max(r_bnd, abs(lhs - (bnd - vzv)))
    return IdentityReport(r_int, r_bnd, len(pairs))
