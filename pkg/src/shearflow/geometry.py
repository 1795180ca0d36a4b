"""Periodic channel geometry and the divergence-free stream-function basis.

The channel is ``0 < x1 < L`` (periodic), ``0 < x2 < h(x1)``.  The bottom
wall ``x2 = 0`` carries the nonsmooth boundary law; its outward normal is
``(0, -1)`` so the normal velocity is ``v_N = -v2`` and the tangential one
is ``v1``.  The top wall ``x2 = h(x1)`` is no-slip.

Velocity modes come from stream functions

    psi(x1, x2) = tau_k(2 pi k x1 / L) * phi_m(eta),   eta = x2 / h(x1),

with ``v = (d psi/d x2, -d psi/d x1)``, so each mode is divergence free by
construction.  The wall-normal profiles ``phi_m`` are polynomials with
``phi(1) = phi'(1) = 0`` (no-slip on top) and ``phi'(0) = 0`` (no tangential
slip on the bottom).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.polynomial import Polynomial
from numpy.polynomial import legendre
from scipy import linalg, optimize

from .errors import BadPeriod, NonPositiveHeight, SingularGram

__all__ = [
    "HeightProfile",
    "QuadratureSpec",
    "ChannelGeometry",
    "QuadGrid",
    "ModeFields",
    "DivFreeBasis",
    "build_channel",
    "build_basis",
    "trace_norm",
    "poincare_lambda1",
    "WallProfiles",
    "wall_profiles",
]


@dataclass(frozen=True)
class HeightProfile:
    """Truncated trigonometric series ``h(x) = mean + sum c_k cos + s_k sin``.

    Harmonic ``k`` (1-based) uses the phase ``2 pi k x / L``.
    """

    mean: float
    cos: tuple[float, ...] = ()
    sin: tuple[float, ...] = ()

    @classmethod
    def from_spec(cls, spec) -> "HeightProfile":
        if isinstance(spec, HeightProfile):
            return spec
        if isinstance(spec, (int, float)):
            return cls(float(spec))
        if isinstance(spec, dict):
            if "constant" in spec:
                return cls(float(spec["constant"]))
            return cls(
                float(spec.get("mean", 0.0)),
                tuple(float(c) for c in spec.get("cos", ())),
                tuple(float(s) for s in spec.get("sin", ())),
            )
        raise TypeError(f"cannot interpret height profile {spec!r}")

    @property
    def is_constant(self) -> bool:
        return not any(self.cos) and not any(self.sin)

    def to_dict(self) -> dict:
        if self.is_constant:
            return {"constant": self.mean}
        return {"mean": self.mean, "cos": list(self.cos), "sin": list(self.sin)}

    def derivatives(self, x, L: float, order: int = 2):
        """Return ``[h, h', h'', ...]`` up to ``order`` at ``x``."""
        x = np.asarray(x, dtype=float)
        out = [np.full_like(x, self.mean)] + [np.zeros_like(x) for _ in range(order)]
        n = max(len(self.cos), len(self.sin))
        for k in range(1, n + 1):
            c = self.cos[k - 1] if k <= len(self.cos) else 0.0
            s = self.sin[k - 1] if k <= len(self.sin) else 0.0
            th = 2.0 * np.pi * k / L
            cs, sn = np.cos(th * x), np.sin(th * x)
            # d^p/dx^p of c cos + s sin cycles through four phases
            for p in range(order + 1):
                ph = [(c * cs + s * sn), (-c * sn + s * cs), -(c * cs + s * sn), (c * sn - s * cs)][p % 4]
                out[p] = out[p] + th**p * ph
        return out

    def __call__(self, x, L: float):
        return self.derivatives(x, L, order=0)[0]


@dataclass(frozen=True)
class QuadratureSpec:
    """Tensor quadrature policy.

    ``nx`` trapezoid nodes along the period and ``neta`` Gauss-Legendre nodes
    across the gap.  ``None`` means "choose from the basis size", which is
    ``oversample`` times the count that integrates triple products of
    modes exactly for a constant-height channel.
    """

    nx: int | None = None
    neta: int | None = None
    oversample: float = 2.0

    def resolve(self, K: int, M: int) -> tuple[int, int]:
        degree = M + 2
        nx = self.nx or max(8, int(np.ceil(self.oversample * (3 * K + 1))))
        neta = self.neta or max(4, int(np.ceil(self.oversample * np.ceil((3 * degree + 1) / 2))))
        return nx, neta


@dataclass(frozen=True, eq=False)
class ChannelGeometry:
    L: float
    h_profile: HeightProfile
    h0: float
    quadrature: QuadratureSpec = field(default_factory=QuadratureSpec)

    def h(self, x1):
        return self.h_profile(x1, self.L)

    @property
    def boundary_measure(self) -> float:
        """Length of the bottom wall (it is flat, so this is ``L``)."""
        return self.L

    @cached_property
    def area(self) -> float:
        return self.h_profile.mean * self.L

    def key(self) -> dict:
        return {
            "L": self.L,
            "h": self.h_profile.to_dict(),
            "quadrature": [self.quadrature.nx, self.quadrature.neta, self.quadrature.oversample],
        }


def build_channel(L: float, h_spec=1.0, quadrature: QuadratureSpec | None = None,
                  n_sample: int = 4096) -> ChannelGeometry:
    """Validate the period and the height profile and locate ``h0 = min h``."""
    if not np.isfinite(L) or L <= 0:
        raise BadPeriod(f"period must be positive, got {L}", witness=L)
    prof = HeightProfile.from_spec(h_spec)
    if prof.is_constant:
        h0 = prof.mean
    else:
        xs = np.linspace(0.0, L, n_sample, endpoint=False)
        hs = prof(xs, L)
        i = int(np.argmin(hs))
        dx = L / n_sample
        res = optimize.minimize_scalar(lambda x: float(prof(x, L)),
                                       bounds=(xs[i] - dx, xs[i] + dx), method="bounded",
                                       options={"xatol": 1e-12})
        h0 = min(float(hs[i]), float(res.fun))
    if not h0 > 0:
        raise NonPositiveHeight(f"height profile reaches {h0} <= 0", witness=h0)
    return ChannelGeometry(float(L), prof, float(h0), quadrature or QuadratureSpec())


class WallProfiles:
    """Wall-normal profiles on ``[0, 1]`` kept in product form.

    Every profile is ``alpha_m C(eta) + q(eta) R_m(2 eta - 1)`` with
    ``C = (1-eta)^2 (1+2 eta)``, the bubble ``q = eta^2 (1-eta)^2`` and a
    Legendre series ``R_m``.  Evaluating the factors separately makes the
    wall conditions hold exactly in floating point, which an expanded
    monomial form does not.

    ``phi_0`` is the only profile with ``phi(0) != 0`` (it carries the normal
    velocity through the bottom wall); ``phi_1..phi_{M-1}`` additionally vanish
    at ``eta = 0``.  The set is orthonormal in ``int phi' psi' d eta``.
    """

    def __init__(self, M: int):
        if M < 1:
            raise ValueError("need at least one wall profile")
        self.M = int(M)
        # derivative Gram by Gauss quadrature on the product form (exact: degree 2M+2)
        x, w = legendre.leggauss(M + 4)
        eta, w = 0.5 * (x + 1.0), 0.5 * w
        e1 = 1.0 - eta
        q, q1 = eta * eta * e1 * e1, 2.0 * eta * e1 * (1.0 - 2.0 * eta)
        rows = [-6.0 * eta * e1]
        for j in range(M - 1):
            c = np.zeros(j + 1)
            c[j] = 1.0
            rows.append(q1 * legendre.legval(x, c) + 2.0 * q * legendre.legval(x, legendre.legder(c)))
        D = np.array(rows)
        gram = (D * w) @ D.T
        # orthonormalize interiors first so the carrier is the one that absorbs the mixing
        order = list(range(1, M)) + [0]
        try:
            chol = np.linalg.cholesky(gram[np.ix_(order, order)])
        except np.linalg.LinAlgError as exc:
            raise SingularGram("wall profiles became linearly dependent") from exc
        if np.min(np.abs(np.diag(chol))) < 1e-10 * np.sqrt(np.max(np.diag(gram))):
            raise SingularGram("wall profiles became linearly dependent")
        T = np.zeros((M, M))
        U = linalg.solve_triangular(chol, np.eye(M), lower=True).T  # upper triangular, exact zeros below
        T[np.ix_(order, order)] = U  # columns: orthonormal combos in permuted order
        coef = T[:, order]  # column k -> k-th orthonormal profile in permuted order
        coef = np.concatenate([coef[:, -1:], coef[:, :-1]], axis=1)  # carrier first
        self.carrier = coef[0, :].copy()         # alpha_m
        self.legendre = coef[1:, :].copy()       # Legendre coefficients of R_m, shape (M-1, M)

    @cached_property
    def polynomials(self) -> list[Polynomial]:
        """Expanded monomial forms (reference use only; they lose accuracy for large ``M``)."""
        eta = Polynomial([0.0, 1.0])
        gens = [(1 - eta) ** 2 * (1 + 2 * eta)]
        gens += [eta**2 * (1 - eta) ** 2 * legendre.Legendre.basis(j).convert(kind=Polynomial)(2 * eta - 1)
                 for j in range(self.M - 1)]
        coef = np.vstack([self.carrier, self.legendre])
        return [sum(coef[i, m] * gens[i] for i in range(self.M)) for m in range(self.M)]

    def __len__(self) -> int:
        return self.M

    def __getitem__(self, m: int) -> Polynomial:
        return self.polynomials[m]

    def evaluate(self, eta) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Profiles and their first two derivatives, each of shape ``eta.shape + (M,)``."""
        eta = np.asarray(eta, dtype=float)
        e1 = 1.0 - eta
        C = e1 * e1 * (1.0 + 2.0 * eta)
        C1 = -6.0 * eta * e1
        C2 = 12.0 * eta - 6.0
        q = eta * eta * e1 * e1
        q1 = 2.0 * eta * e1 * (1.0 - 2.0 * eta)
        q2 = 2.0 - 12.0 * eta * e1
        f, fp, fpp = (x[..., None] * self.carrier for x in (C, C1, C2))
        if self.M > 1:
            y = 2.0 * eta - 1.0
            L0 = legendre.legval(y, self.legendre, tensor=True)
            L1 = 2.0 * legendre.legval(y, legendre.legder(self.legendre, 1), tensor=True)
            L2 = 4.0 * legendre.legval(y, legendre.legder(self.legendre, 2), tensor=True) \
                if self.M > 2 else np.zeros_like(L0)
            L0, L1, L2 = (np.moveaxis(np.asarray(a), 0, -1) for a in (L0, L1, L2))
            qe, q1e, q2e = q[..., None], q1[..., None], q2[..., None]
            f = f + qe * L0
            fp = fp + q1e * L0 + qe * L1
            fpp = fpp + q2e * L0 + 2.0 * q1e * L1 + qe * L2
        return f, fp, fpp


def wall_profiles(M: int) -> list[Polynomial]:
    """The profiles of :class:`WallProfiles` as expanded polynomials (for reference use)."""
    return list(WallProfiles(M).polynomials)


@dataclass(frozen=True, eq=False)
class QuadGrid:
    """Flattened tensor quadrature over the channel."""

    x1: np.ndarray
    x2: np.ndarray
    eta: np.ndarray
    w: np.ndarray

    @property
    def size(self) -> int:
        return self.w.size


def _gauss01(n: int):
    x, w = legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def channel_grid(geom: ChannelGeometry, nx: int, neta: int, cuts=(), ncut: int | None = None) -> QuadGrid:
    """Trapezoid in ``x1`` times Gauss-Legendre in ``x2``.

    ``cuts`` are physical heights below ``h0`` at which the vertical rule is
    split into panels (used to resolve the compactly supported lift).  Panels
    below a cut get ``ncut`` nodes.
    """
    x1 = np.arange(nx) * geom.L / nx
    h = geom.h(x1)
    cols_x2, cols_w = [], []
    for hj in np.atleast_1d(h):
        edges = [0.0] + sorted(c for c in cuts if 0.0 < c < hj) + [hj]
        xs, ws = [], []
        for a, b in zip(edges[:-1], edges[1:]):
            n = ncut if (ncut and b <= max(cuts, default=0.0) + 1e-15) else neta
            t, wt = _gauss01(n)
            xs.append(a + (b - a) * t)
            ws.append((b - a) * wt)
        cols_x2.append(np.concatenate(xs))
        cols_w.append(np.concatenate(ws))
    x2 = np.stack(cols_x2)
    w = np.stack(cols_w) * (geom.L / nx)
    X1 = np.broadcast_to(x1[:, None], x2.shape)
    eta = x2 / h[:, None]
    return QuadGrid(X1.ravel().copy(), x2.ravel(), eta.ravel(), w.ravel())


@dataclass(frozen=True, eq=False)
class ModeFields:
    """Velocity, gradient and vorticity of every raw mode at a point set.

    All arrays have shape ``(n_points, n_modes)``; ``grad[a][b]`` is
    ``d v_b / d x_a`` (0-based).
    """

    v1: np.ndarray
    v2: np.ndarray
    d1v1: np.ndarray
    d2v1: np.ndarray
    d1v2: np.ndarray
    d2v2: np.ndarray

    @property
    def omega(self) -> np.ndarray:
        return self.d1v2 - self.d2v1

    @property
    def divergence(self) -> np.ndarray:
        return self.d1v1 + self.d2v2

    def rotate(self, E: np.ndarray) -> "ModeFields":
        return ModeFields(*(getattr(self, f) @ E for f in ("v1", "v2", "d1v1", "d2v1", "d1v2", "d2v2")))


class DivFreeBasis:
    """Stream-function Galerkin space, optionally rotated to discrete Stokes modes.

    ``mass_matrix``, ``stiffness_matrix`` and ``trace_normal`` are expressed in
    the working basis: the discrete Stokes eigenbasis when ``rotated`` (then
    ``mass_matrix`` is the identity and ``stiffness_matrix`` is diagonal up to
    round-off) and the raw stream-function modes otherwise.  The raw versions
    are kept as ``raw_*``.
    """

    def __init__(self, geometry: ChannelGeometry, K: int, M: int, rotate: bool = True):
        if K < 0 or M < 1:
            raise ValueError(f"need K >= 0 and M >= 1, got K={K}, M={M}")
        self.geometry = geometry
        self.K = int(K)
        self.M = int(M)
        self.profiles = WallProfiles(M)
        # (wavenumber, kind) with kind 0 = cos, 1 = sin
        self.fourier = [(0, 0)] + [(k, kind) for k in range(1, K + 1) for kind in (0, 1)]
        self.size = len(self.fourier) * M
        self.nx, self.neta = geometry.quadrature.resolve(K, M)
        self.grid = channel_grid(geometry, self.nx, self.neta)
        self.bottom_x1 = np.arange(self.nx) * geometry.L / self.nx
        self.bottom_w = np.full(self.nx, geometry.L / self.nx)
        self._assemble(rotate)

    # -- evaluation ---------------------------------------------------------

    def _trig(self, x1):
        L = self.geometry.L
        cols = []
        for k, kind in self.fourier:
            th = 2.0 * np.pi * k / L
            c, s = np.cos(th * x1), np.sin(th * x1)
            if kind == 0:
                cols.append((c, -th * s, -th * th * c))
            else:
                cols.append((s, th * c, -th * th * s))
        return [np.stack([col[p] for col in cols], axis=-1) for p in range(3)]

    def _prof(self, eta):
        return list(self.profiles.evaluate(eta))

    def raw_fields(self, x1, x2) -> ModeFields:
        """Evaluate all raw modes at physical points ``(x1, x2)``."""
        x1 = np.asarray(x1, dtype=float).ravel()
        x2 = np.asarray(x2, dtype=float).ravel()
        h, hp, hpp = self.geometry.h_profile.derivatives(x1, self.geometry.L, 2)
        g = 1.0 / h
        gp = -hp / h**2
        gpp = -hpp / h**2 + 2.0 * hp**2 / h**3
        eta = x2 * g
        e1, e2, e11, e12 = x2 * gp, g, x2 * gpp, gp

        t, tp, tpp = (a[:, :, None] for a in self._trig(x1))
        f, fp, fpp = (a[:, None, :] for a in self._prof(eta))
        c = lambda a: a[:, None, None]  # noqa: E731

        psi1 = tp * f + t * fp * c(e1)
        psi2 = t * fp * c(e2)
        psi11 = tpp * f + 2.0 * tp * fp * c(e1) + t * fpp * c(e1 * e1) + t * fp * c(e11)
        psi22 = t * fpp * c(e2 * e2)
        # d/dx1 of psi2, and d/dx2 of psi1, grouped differently on purpose
        d1_psi2 = (tp * fp) * c(e2) + (t * fpp) * c(e1 * e2) + (t * fp) * c(e12)
        d2_psi1 = c(e2) * (tp * fp + t * fpp * c(e1)) + t * fp * c(gp)

        n = x1.size
        r = lambda a: np.broadcast_to(a, (n, len(self.fourier), self.M)).reshape(n, self.size)  # noqa: E731
        return ModeFields(v1=r(psi2), v2=r(-psi1), d1v1=r(d1_psi2), d2v1=r(psi22),
                          d1v2=r(-psi11), d2v2=r(-d2_psi1))

    def fields(self, x1, x2) -> ModeFields:
        """Evaluate all working-basis modes at physical points."""
        raw = self.raw_fields(x1, x2)
        return raw.rotate(self.rotation) if self.rotated else raw

    def stream_function(self, x1, x2) -> np.ndarray:
        """Raw stream functions, shape ``(n_points, n_modes)``."""
        x1 = np.asarray(x1, dtype=float).ravel()
        x2 = np.asarray(x2, dtype=float).ravel()
        eta = x2 / self.geometry.h(x1)
        t = self._trig(x1)[0][:, :, None]
        f = self._prof(eta)[0][:, None, :]
        return (t * f).reshape(x1.size, self.size)

    def normal_trace(self, x1) -> np.ndarray:
        """Raw ``v_N = -v2`` on the bottom wall at abscissae ``x1``."""
        return -self.raw_fields(x1, np.zeros_like(np.asarray(x1, dtype=float))).v2

    # -- assembly -------------------------------------------------------------

    def _assemble(self, rotate: bool):
        q = self.grid
        fl = self.raw_fields(q.x1, q.x2)
        self.raw_quadrature_fields = fl
        W = q.w[:, None]
        self.raw_mass = (fl.v1 * W).T @ fl.v1 + (fl.v2 * W).T @ fl.v2
        grads = (fl.d1v1, fl.d2v1, fl.d1v2, fl.d2v2)
        self.raw_stiffness = sum((g * W).T @ g for g in grads)
        self.raw_rotrot = (fl.omega * W).T @ fl.omega
        self.raw_trace_normal = self.normal_trace(self.bottom_x1)
        for name in ("raw_mass", "raw_stiffness", "raw_rotrot"):
            A = getattr(self, name)
            setattr(self, name, 0.5 * (A + A.T))
        try:
            linalg.cholesky(self.raw_mass)
            linalg.cholesky(self.raw_stiffness)
        except linalg.LinAlgError as exc:
            raise SingularGram("raw Gram matrices are not positive definite") from exc
        mu, E = linalg.eigh(self.raw_stiffness, self.raw_mass)
        if not mu[0] > 0:
            raise SingularGram("smallest Stokes eigenvalue is not positive", witness=float(mu[0]))
        self.stokes_eigenvalues = mu
        self.stokes_eigenvectors = E
        self.rotated = bool(rotate)
        self.rotation = E if rotate else np.eye(self.size)
        R = self.rotation
        self.mass_matrix = R.T @ self.raw_mass @ R
        self.stiffness_matrix = R.T @ self.raw_stiffness @ R
        self.rotrot_matrix = R.T @ self.raw_rotrot @ R
        self.trace_normal = self.raw_trace_normal @ R
        self.boundary_gram = (self.trace_normal * self.bottom_w[:, None]).T @ self.trace_normal
        self.quadrature_fields = fl.rotate(R) if rotate else fl

    @property
    def stokes_eigenpairs(self):
        return self.stokes_eigenvalues, self.stokes_eigenvectors

    @cached_property
    def stiffness_condition(self) -> float:
        return float(np.linalg.cond(self.raw_stiffness))

    def key(self) -> dict:
        return {**self.geometry.key(), "K": self.K, "M": self.M, "rotated": self.rotated}

    # -- norms of coefficient vectors ---------------------------------------

    def norm_H(self, a) -> float:
        a = np.asarray(a)
        return float(np.sqrt(max(a @ self.mass_matrix @ a, 0.0)))

    def norm_V(self, a) -> float:
        a = np.asarray(a)
        return float(np.sqrt(max(a @ self.stiffness_matrix @ a, 0.0)))

    def __repr__(self) -> str:
        return f"DivFreeBasis(K={self.K}, M={self.M}, N={self.size}, rotated={self.rotated})"


def build_basis(geom: ChannelGeometry, K: int, M: int, rotate: bool = True) -> DivFreeBasis:
    return DivFreeBasis(geom, K, M, rotate=rotate)


def trace_norm(basis: DivFreeBasis) -> float:
    """Discrete norm of the trace map from (span, V-norm) to ``L2(Gamma_0)``.

    The tangential trace vanishes identically, so only the normal component
    contributes.
    """
    vals = linalg.eigh(basis.boundary_gram, basis.stiffness_matrix, eigvals_only=True)
    return float(np.sqrt(max(vals[-1], 0.0)))


def poincare_lambda1(basis: DivFreeBasis) -> float:
    """Smallest generalized eigenvalue of (stiffness, mass)."""
    return float(basis.stokes_eigenvalues[0])
