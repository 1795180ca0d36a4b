"""Piecewise-C1 superpotentials, their Clarke subdifferential, and mollification.

A :class:`Superpotential` is a continuous function made of smooth pieces
joined at finitely many breakpoints.  For such functions the Clarke
subdifferential at a breakpoint is the closed interval between the two
one-sided derivatives, and a single point elsewhere.

:func:`mollify` convolves ``j`` with the rescaled bump
``rho_n(t) = n rho(n t)`` supported in ``(-1/n, 1/n)``; the derivative of
the mollified potential is the single-valued selection used by the
regularized Galerkin scheme.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import Polynomial
from numpy.polynomial import legendre
from scipy import integrate

from .errors import DissipativityViolated, QuadratureBudgetExceeded

__all__ = [
    "Piece",
    "Superpotential",
    "MollifiedPotential",
    "PotentialCertificate",
    "StabilityScan",
    "bump",
    "bump_constant",
    "quadratic",
    "pressure_drop",
    "gaussian_well",
    "piecewise_polynomial",
    "from_spec",
    "clarke_interval",
    "clarke_hull",
    "mollify",
    "certify",
    "constant_stability_scan",
]

_BREAK_TOL = 1e-14


@dataclass(frozen=True)
class Piece:
    """One smooth piece: value and derivative callables (vectorized).

    ``poly`` is set for polynomial pieces; it enables exact derivative range
    computations and the compiled convolution kernel.
    """

    value: Callable
    deriv: Callable
    poly: Polynomial | None = None
    label: str = ""

    @classmethod
    def polynomial(cls, coefs: Sequence[float]) -> "Piece":
        p = Polynomial(np.asarray(coefs, dtype=float))
        return cls(p, p.deriv(), p, f"poly{list(map(float, coefs))}")


@dataclass(frozen=True)
class Superpotential:
    breakpoints: tuple[float, ...]
    pieces: tuple[Piece, ...]
    name: str = "custom"
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        bps = tuple(float(b) for b in self.breakpoints)
        object.__setattr__(self, "breakpoints", bps)
        if len(self.pieces) != len(bps) + 1:
            raise ValueError("need exactly one more piece than breakpoints")
        if any(b1 >= b2 for b1, b2 in zip(bps[:-1], bps[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        for i, b in enumerate(bps):
            left = float(self.pieces[i].value(b))
            right = float(self.pieces[i + 1].value(b))
            if abs(left - right) > 1e-12 * max(1.0, abs(left)):
                raise ValueError(f"potential is discontinuous at {b}: {left} vs {right}")

    @property
    def is_polynomial(self) -> bool:
        return all(p.poly is not None for p in self.pieces)

    def piece_index(self, s):
        """Index of the piece owning ``s``; breakpoints belong to the right piece."""
        return np.searchsorted(np.asarray(self.breakpoints), np.asarray(s, dtype=float), side="right")

    def _dispatch(self, s, attr):
        s = np.asarray(s, dtype=float)
        idx = self.piece_index(s)
        out = np.empty_like(s)
        for i, piece in enumerate(self.pieces):
            m = idx == i
            if np.any(m):
                out[m] = getattr(piece, attr)(s[m])
        return out if out.ndim else float(out)

    def value(self, s):
        return self._dispatch(s, "value")

    def deriv(self, s):
        """Classical derivative (right derivative at breakpoints)."""
        return self._dispatch(s, "deriv")

    __call__ = value

    def deriv_table(self) -> np.ndarray:
        """Derivative coefficients, one padded row per piece (polynomial pieces only)."""
        if not self.is_polynomial:
            raise ValueError("derivative table needs polynomial pieces")
        rows = [p.poly.deriv().coef for p in self.pieces]
        width = max(len(r) for r in rows)
        return np.array([np.pad(r, (0, width - len(r))) for r in rows])

    def to_dict(self) -> dict:
        return {"name": self.name, **self.params}


# -- built-in potentials -----------------------------------------------------------


def quadratic(scale: float = 0.5) -> Superpotential:
    """``j(s) = scale * s**2`` (convex; ``scale = 1/2`` gives ``j' = s``)."""
    return Superpotential((), (Piece.polynomial([0.0, 0.0, scale]),), "quadratic", {"scale": scale})


def pressure_drop(threshold: float = 1.0, inner: float = 1.0, outer: float = 0.1) -> Superpotential:
    """Nonmonotone "pressure drop" law.

    ``j(s) = inner * s**2`` for ``|s| <= threshold`` and
    ``inner * threshold**2 + outer * (s**2 - threshold**2)`` beyond, so the
    slope drops from ``2 inner s`` to ``2 outer s`` when the normal velocity
    crosses the threshold.
    """
    a, b, t = float(inner), float(outer), float(threshold)
    outer_piece = Piece.polynomial([a * t * t - b * t * t, 0.0, b])
    inner_piece = Piece.polynomial([0.0, 0.0, a])
    return Superpotential((-t, t), (outer_piece, inner_piece, outer_piece), "pressure_drop",
                          {"threshold": t, "inner": a, "outer": b})


def gaussian_well(alpha: float = 1.0) -> Superpotential:
    """``j(s) = s**2/2 + alpha * exp(-s**2/2)``; nonconvex near 0 when ``alpha > 1``."""
    a = float(alpha)
    piece = Piece(lambda s: 0.5 * s**2 + a * np.exp(-0.5 * s**2),
                  lambda s: s - a * s * np.exp(-0.5 * s**2), None, "gaussian_well")
    return Superpotential((), (piece,), "gaussian_well", {"alpha": a})


def piecewise_polynomial(breakpoints: Sequence[float], coefficients: Sequence[Sequence[float]],
                         name: str = "piecewise") -> Superpotential:
    """Generic block: ``coefficients[i]`` are ascending power coefficients of piece ``i``."""
    pieces = tuple(Piece.polynomial(c) for c in coefficients)
    return Superpotential(tuple(breakpoints), pieces, name,
                          {"breakpoints": list(map(float, breakpoints)),
                           "coefficients": [list(map(float, c)) for c in coefficients]})


_BUILTINS = {"quadratic": quadratic, "pressure_drop": pressure_drop, "gaussian_well": gaussian_well}


def from_spec(spec) -> Superpotential:
    """Build a potential from a name or a ``{"name": ..., **params}`` mapping."""
    if isinstance(spec, Superpotential):
        return spec
    if isinstance(spec, str):
        spec = {"name": spec}
    spec = dict(spec)
    name = spec.pop("name")
    if name in ("piecewise", "piecewise_polynomial"):
        return piecewise_polynomial(spec["breakpoints"], spec["coefficients"])
    if name not in _BUILTINS:
        raise ValueError(f"unknown potential {name!r}")
    return _BUILTINS[name](**spec)


# -- Clarke subdifferential ------------------------------------------------------


def _at_breakpoint(j: Superpotential, s: float):
    for i, b in enumerate(j.breakpoints):
        if abs(s - b) <= _BREAK_TOL * max(1.0, abs(b)):
            return i
    return None


def clarke_interval(j: Superpotential, s: float) -> tuple[float, float]:
    """Closed interval ``[lo, hi]`` equal to the Clarke subdifferential of ``j`` at ``s``."""
    s = float(s)
    i = _at_breakpoint(j, s)
    if i is None:
        d = float(j.deriv(s))
        return d, d
    b = j.breakpoints[i]
    left = float(j.pieces[i].deriv(b))
    right = float(j.pieces[i + 1].deriv(b))
    return min(left, right), max(left, right)


def _deriv_range(piece: Piece, a: float, b: float, n_sample: int = 257) -> tuple[float, float]:
    if piece.poly is not None:
        dp = piece.poly.deriv()
        pts = [a, b]
        if dp.degree() >= 2:
            pts += [float(r.real) for r in dp.deriv().roots() if abs(r.imag) < 1e-12 and a < r.real < b]
        vals = dp(np.array(pts))
    else:
        vals = piece.deriv(np.linspace(a, b, n_sample))
    return float(np.min(vals)), float(np.max(vals))


def clarke_hull(j: Superpotential, a: float, b: float) -> tuple[float, float]:
    """Hull of the union of Clarke intervals over ``[a, b]`` (interval arithmetic over pieces).

    Exact for polynomial pieces; non-polynomial pieces are bounded by dense
    sampling.
    """
    a, b = float(a), float(b)
    edges = [a] + [bp for bp in j.breakpoints if a < bp < b] + [b]
    lo, hi = math.inf, -math.inf
    for x0, x1 in zip(edges[:-1], edges[1:]):
        piece = j.pieces[int(j.piece_index(0.5 * (x0 + x1)))]
        l, h = _deriv_range(piece, x0, x1)
        lo, hi = min(lo, l), max(hi, h)
    for bp in j.breakpoints:
        if a <= bp <= b:
            l, h = clarke_interval(j, bp)
            lo, hi = min(lo, l), max(hi, h)
    return lo, hi


# -- mollification -----------------------------------------------------------------


def _bump_raw(t):
    t = np.asarray(t, dtype=float)
    inside = np.abs(t) < 1.0
    out = np.zeros_like(t)
    ti = t[inside]
    out[inside] = np.exp(-1.0 / (1.0 - ti * ti))
    return out


@lru_cache(maxsize=None)
def bump_constant() -> float:
    """Normalization making ``c * exp(-1/(1-t^2))`` a unit-mass kernel on (-1, 1)."""
    mass, _ = integrate.quad(lambda t: math.exp(-1.0 / (1.0 - t * t)), -1.0, 1.0,
                             epsabs=1e-14, epsrel=1e-13, limit=200)
    return 1.0 / mass


def bump(t, n: int = 1):
    """Mollifier ``rho_n(t) = n * rho(n t)``."""
    return n * bump_constant() * _bump_raw(n * np.asarray(t, dtype=float))


@lru_cache(maxsize=None)
def _gauss01(q: int):
    x, w = legendre.leggauss(q)
    return 0.5 * (x + 1.0), 0.5 * w


def _convolve(r, j: Superpotential, n: int, q: int, attr: str):
    """``int rho_n(t) f(r - t) dt`` with ``f`` the value or derivative of ``j``.

    The kernel support is split wherever ``r - t`` crosses a breakpoint, so
    every Gauss panel sees a single smooth piece.
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    half = 1.0 / n
    bps = np.asarray(j.breakpoints, dtype=float)
    cuts = np.clip(r[:, None] - bps[None, :], -half, half)
    edges = np.sort(np.concatenate([np.full((r.size, 1), -half), cuts, np.full((r.size, 1), half)], axis=1),
                    axis=1)
    lo, hi = edges[:, :-1], edges[:, 1:]
    nodes, weights = _gauss01(q)
    width = hi - lo
    t = lo[..., None] + width[..., None] * nodes
    wt = width[..., None] * weights * bump(t, n)
    s = r[:, None, None] - t
    owner = j.piece_index(r[:, None] - 0.5 * (lo + hi))
    vals = np.zeros_like(s)
    for i, piece in enumerate(j.pieces):
        m = owner == i
        if np.any(m):
            vals[m] = getattr(piece, attr)(s[m])
    return np.sum(wt * vals, axis=(1, 2))


@dataclass(frozen=True, eq=False)
class MollifiedPotential:
    base: Superpotential
    n: int
    quad_points: int = 64

    @property
    def support(self) -> float:
        return 1.0 / self.n

    @property
    def breakpoints(self):
        return self.base.breakpoints

    def kernel(self, t):
        return bump(t, self.n)

    def kernel_mass(self) -> float:
        nodes, weights = _gauss01(self.quad_points)
        t = -self.support + 2 * self.support * nodes
        return float(np.sum(2 * self.support * weights * self.kernel(t)))

    def value(self, r):
        arr = np.asarray(r, dtype=float)
        out = _convolve(arr.ravel(), self.base, self.n, self.quad_points, "value")
        return out.reshape(arr.shape) if arr.ndim else float(out[0])

    def deriv(self, r):
        """``j_n'(r)``; dispatches to the compiled kernel for polynomial pieces."""
        from . import kernels

        arr = np.asarray(r, dtype=float)
        flat = arr.ravel()
        if self.base.is_polynomial:
            out = kernels.mollified_deriv(flat, self._table()[0], self._table()[1], self.n,
                                          *_gauss01(self.quad_points), bump_constant())
        else:
            out = _convolve(flat, self.base, self.n, self.quad_points, "deriv")
        return out.reshape(arr.shape) if arr.ndim else float(out[0])

    def deriv_reference(self, r):
        """Pure numpy evaluation of ``j_n'`` (no compiled kernel)."""
        arr = np.asarray(r, dtype=float)
        out = _convolve(arr.ravel(), self.base, self.n, self.quad_points, "deriv")
        return out.reshape(arr.shape) if arr.ndim else float(out[0])

    def _table(self):
        cache = self.__dict__.get("_tab")
        if cache is None:
            cache = (np.asarray(self.base.breakpoints, dtype=float), self.base.deriv_table())
            self.__dict__["_tab"] = cache
        return cache

    def __call__(self, r):
        return self.value(r)

    @property
    def name(self) -> str:
        return f"{self.base.name}[n={self.n}]"


def mollify(j: Superpotential, n: int, tol: float = 1e-10, max_points: int = 512) -> MollifiedPotential:
    """Mollify ``j`` with ``rho_n``; the Gauss rule is doubled until the kernel mass converges."""
    if int(n) != n or n < 1:
        raise ValueError(f"mollification index must be a positive integer, got {n}")
    q = 32
    while q <= max_points:
        coarse = MollifiedPotential(j, int(n), q)
        fine = MollifiedPotential(j, int(n), 2 * q)
        if abs(coarse.kernel_mass() - fine.kernel_mass()) < tol and abs(fine.kernel_mass() - 1.0) < tol:
            return fine
        q *= 2
    raise QuadratureBudgetExceeded(f"kernel quadrature did not reach tol={tol} with {max_points} points",
                                   witness=tol)


# -- H(j) certification ----------------------------------------------------------


@dataclass(frozen=True)
class PotentialCertificate:
    c1: float
    c2: float
    d1: float
    d2: float
    d2_limit: float
    margin: float
    sample_range: tuple[float, float]
    n_range: tuple[int, ...] = ()
    potential: str = ""
    scan_s: np.ndarray = field(default=None, repr=False, compare=False)
    scan_lo: np.ndarray = field(default=None, repr=False, compare=False)
    scan_hi: np.ndarray = field(default=None, repr=False, compare=False)

    def admits(self, c1=None, c2=None, d1=None, d2=None, tol: float = 1e-12) -> bool:
        """Check alternative constants against the scanned data."""
        c1 = self.c1 if c1 is None else c1
        c2 = self.c2 if c2 is None else c2
        d1 = self.d1 if d1 is None else d1
        d2 = self.d2 if d2 is None else d2
        s = self.scan_s
        env = np.maximum(np.abs(self.scan_lo), np.abs(self.scan_hi))
        low = np.minimum(self.scan_lo * s, self.scan_hi * s)
        return bool(np.all(env <= c1 + c2 * np.abs(s) + tol) and np.all(low >= d1 - d2 * s * s - tol))

    def to_dict(self) -> dict:
        return {
            "potential": self.potential,
            "c1": self.c1,
            "c2": self.c2,
            "d1": self.d1,
            "d2": self.d2,
            "d2_limit": self.d2_limit,
            "margin": self.margin,
            "sample_range": list(self.sample_range),
            "n_range": list(self.n_range),
        }


def _scan_points(j, lo: float, hi: float, resolution: int) -> np.ndarray:
    s = np.linspace(lo, hi, resolution)
    extra = []
    base = j.base if isinstance(j, MollifiedPotential) else j
    for b in base.breakpoints:
        if lo <= b <= hi:
            extra.append([b])
            if isinstance(j, MollifiedPotential):
                extra.append(np.linspace(b - 1.5 * j.support, b + 1.5 * j.support, 301))
    if lo <= 0.0 <= hi:
        extra.append([0.0])
    s = np.concatenate([s] + [np.asarray(e, dtype=float) for e in extra])
    return np.unique(s[(s >= lo) & (s <= hi)])


def _selections(j, s):
    if isinstance(j, MollifiedPotential):
        d = np.asarray(j.deriv(s))
        return d, d
    lo = np.asarray(j.deriv(s), dtype=float).copy()
    hi = lo.copy()
    for b in j.breakpoints:
        m = np.abs(s - b) <= _BREAK_TOL * max(1.0, abs(b))
        if np.any(m):
            l, h = clarke_interval(j, b)
            lo[m], hi[m] = l, h
    return lo, hi


def certify(j, scan=(-50.0, 50.0, 20001), nu: float = 1.0, gamma_norm: float = 1.0,
            margin: float = 0.9, tail_fraction: float = 0.5, d2_floor: float = 1e-3,
            c1_floor: float = 1e-12) -> PotentialCertificate:
    """Fit the growth and dissipativity constants of ``j`` (or ``j_n``) on a scan.

    ``c2`` is the largest ratio ``|xi| / |s|`` over the outer ``tail_fraction``
    of the range and ``c1`` the smallest offset making ``c1 + c2 |s|`` an upper
    envelope.  ``d2`` is the largest ``-min(xi s) / s**2`` over the same tail,
    floored at ``d2_floor * nu / gamma_norm**2``; ``d1`` is then the smallest
    offset that works.  ``d2`` must stay below ``margin * nu / gamma_norm**2``.
    """
    lo_s, hi_s, resolution = float(scan[0]), float(scan[1]), int(scan[2])
    s = _scan_points(j, lo_s, hi_s, resolution)
    lo, hi = _selections(j, s)
    env = np.maximum(np.abs(lo), np.abs(hi))
    low = np.minimum(lo * s, hi * s)
    reach = max(abs(lo_s), abs(hi_s))
    tail = np.abs(s) >= tail_fraction * reach
    if not np.any(tail):
        tail = np.abs(s) > 0
    c2 = float(np.max(env[tail] / np.abs(s[tail])))
    c2 = max(c2, c1_floor)
    c1 = max(float(np.max(env - c2 * np.abs(s))), c1_floor)
    d2_limit = nu / gamma_norm**2 if gamma_norm > 0 else math.inf
    ratio = -low[tail] / s[tail] ** 2
    k = int(np.argmax(ratio))
    floor = d2_floor * (d2_limit if math.isfinite(d2_limit) else 1.0)
    d2 = max(float(ratio[k]), floor)
    if not d2 < margin * d2_limit:
        raise DissipativityViolated(
            f"dissipativity needs d2 >= {d2:.6g} but the admissible bound is "
            f"{margin} * nu/|gamma|^2 = {margin * d2_limit:.6g}",
            witness=float(s[tail][k]))
    d1 = float(np.min(low + d2 * s * s))
    n_range = (j.n,) if isinstance(j, MollifiedPotential) else ()
    return PotentialCertificate(c1, c2, d1, d2, d2_limit, margin, (lo_s, hi_s), n_range, j.name,
                                s, lo, hi)


@dataclass
class StabilityScan:
    rows: list
    threshold: float
    drift: dict
    N0: int | None

    def drift_from(self, n: int) -> float:
        return max(v for k, v in self.drift.items() if k >= n)

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "N0": self.N0,
            "rows": [c.to_dict() for _, c in self.rows],
            "drift": {str(k): v for k, v in self.drift.items()},
        }


def _relative_spread(values, floor: float = 1e-8) -> float:
    v = np.asarray(values, dtype=float)
    return float((v.max() - v.min()) / max(np.abs(v).max(), floor))


def constant_stability_scan(j: Superpotential, n_list: Sequence[int], scan=(-50.0, 50.0, 20001),
                            nu: float = 1.0, gamma_norm: float = 1.0, threshold: float = 0.1,
                            **certify_kw) -> StabilityScan:
    """Certify ``j_n`` for each ``n`` and locate where the constants settle.

    ``drift[n]`` is the largest relative spread of any of ``c1, c2, d1, d2``
    over all rows with index ``>= n``; ``N0`` is the smallest listed ``n``
    whose drift is below ``threshold``.
    """
    if not n_list:
        raise ValueError("n_list must be nonempty")
    ns = sorted(int(n) for n in n_list)
    rows = [(n, certify(mollify(j, n), scan, nu, gamma_norm, **certify_kw)) for n in ns]
    drift = {}
    for i, n in enumerate(ns):
        tail = [c for _, c in rows[i:]]
        drift[n] = max(_relative_spread([getattr(c, name) for c in tail]) for name in ("c1", "c2", "d1", "d2"))
    N0 = next((n for n in ns if drift[n] < threshold), None)
    return StabilityScan(rows, threshold, drift, N0)
