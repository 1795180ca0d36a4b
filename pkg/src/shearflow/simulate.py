"""Time integration of the regularized Galerkin system.

In the working basis the system reads ``M a' + A a = N(a)`` with the
explicit part

    N(a) = F + G a - B[a] - T_N^T (w_b * j_n'(T_N a)),

where ``T_N`` evaluates the normal trace at the bottom quadrature nodes and
``w_b`` are their weights.  The stiff linear part is handled either exactly
(exponential integrators ``etd1`` and ``etd2``) or by backward Euler
(``imex_euler``); the nonlinear and boundary terms are always explicit.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg

from . import io
from .errors import InvalidCertificate, NonFiniteState, SolverFailure
from .geometry import DivFreeBasis
from .operators import OperatorSet
from .potential import MollifiedPotential, Superpotential, from_spec, mollify

__all__ = [
    "FlowParameters",
    "GalerkinState",
    "Trajectory",
    "Stepper",
    "SCHEMES",
    "step",
    "run",
    "initial_coefficients",
    "explicit_terms",
    "residual",
    "reference_integrate",
    "energy_monitor",
    "vprime_monitor",
    "EnergyReport",
    "VPrimeReport",
    "EnergyViolation",
]

SCHEMES = ("etd1", "etd2", "imex_euler")
BLOWUP_FACTOR = 1e6


class EnergyViolation(UserWarning):
    """Issued (not raised) when the discrete energy inequality fails beyond tolerance."""


@dataclass(frozen=True)
class FlowParameters:
    """Physical and numerical parameters of one run.

    ``v0`` is ``"zero"``, a coefficient vector, or a one-entry mapping
    ``{"random_H_ball": {...}}`` / ``{"eigenmode": {...}}``; see
    :func:`initial_coefficients`.
    """

    nu: float
    s: float
    lam: float
    potential: object
    n_mollify: int
    dt: float
    t_end: float
    v0: object = "zero"
    scheme: str = "etd1"
    convection: bool = True
    boundary: bool = True
    seed: int | None = None
    checkpoint_every: int = 0
    checkpoint_dir: str | None = None
    scan_range: tuple[float, float] = (-50.0, 50.0)

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError(f"nu must be positive, got {self.nu}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.t_end >= 0:
            raise ValueError(f"t_end must be nonnegative, got {self.t_end}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def superpotential(self) -> Superpotential:
        return self.potential if isinstance(self.potential, Superpotential) else from_spec(self.potential)

    def to_dict(self) -> dict:
        pot = self.potential.to_dict() if isinstance(self.potential, Superpotential) else self.potential
        v0 = self.v0.tolist() if isinstance(self.v0, np.ndarray) else self.v0
        return {"nu": self.nu, "s": self.s, "lambda": self.lam, "potential": pot, "n_mollify": self.n_mollify,
                "dt": self.dt, "t_end": self.t_end, "v0": v0, "scheme": self.scheme,
                "convection": self.convection, "boundary": self.boundary, "seed": self.seed,
                "checkpoint_every": self.checkpoint_every, "scan_range": list(self.scan_range)}


@dataclass(frozen=True)
class GalerkinState:
    t: float
    a: np.ndarray

    def __post_init__(self):
        a = np.array(self.a, dtype=float)
        a.setflags(write=False)
        object.__setattr__(self, "a", a)

    @property
    def finite(self) -> bool:
        return bool(np.all(np.isfinite(self.a)))


@dataclass
class Trajectory:
    """Uniformly sampled solution with precomputed norm channels.

    ``vprime`` is the authoritative residual-based ``||v'||_{V*}``;
    ``vprime_fd`` is the backward-difference estimate (its first entry
    repeats the second).
    """

    t: np.ndarray
    a: np.ndarray
    norm_H: np.ndarray
    norm_V: np.ndarray
    vprime: np.ndarray
    vprime_fd: np.ndarray
    vN: np.ndarray | None = None
    xi: np.ndarray | None = None
    energy_log: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0]) if self.t.size > 1 else 0.0

    @property
    def horizon(self) -> float:
        return float(self.t[-1] - self.t[0])

    @property
    def n_samples(self) -> int:
        return int(self.t.size)

    def state(self, k: int) -> GalerkinState:
        return GalerkinState(float(self.t[k]), self.a[k])

    def rows(self):
        """Rows ``(t, |v|_H, |v|, |v'|_{V*}, energy slack)`` for CSV export."""
        slack = np.full(self.t.size, np.nan)
        if self.energy_log is not None:
            slack[1:] = self.energy_log
        return np.column_stack([self.t, self.norm_H, self.norm_V, self.vprime, slack])


# -- right-hand side -------------------------------------------------------------


def explicit_terms(a, ops: OperatorSet, jn: MollifiedPotential | None, convection: bool = True,
                   boundary: bool = True, return_xi: bool = False):
    """``N(a)`` as a load vector in the working basis (optionally with ``v_N`` and ``xi``)."""
    out = ops.F_vector + ops.G_apply(a)
    if convection:
        out = out - ops.B_apply(a)
    vn = ops.normal_trace(a)
    xi = np.zeros_like(vn)
    if boundary and jn is not None:
        xi = np.asarray(jn.deriv(vn), dtype=float)
        out = out - ops.boundary_load(xi)
    if return_xi:
        return out, vn, xi
    return out


def residual(a, ops: OperatorSet, jn, convection: bool = True, boundary: bool = True) -> np.ndarray:
    """Residual functional ``z -> <F + G v - A v - B[v], z> - (xi, z_N)``."""
    return explicit_terms(a, ops, jn, convection, boundary) - ops.A_matrix @ a


def _phi1(z):
    z = np.asarray(z, dtype=float)
    out = np.ones_like(z)
    nz = z > 1e-12
    out[nz] = -np.expm1(-z[nz]) / z[nz]
    out[~nz] = 1.0 - z[~nz] / 2.0
    return out


def _phi2(z):
    z = np.asarray(z, dtype=float)
    out = np.full_like(z, 0.5)
    big = z > 1e-4
    zb = z[big]
    out[big] = (np.expm1(-zb) + zb) / (zb * zb)
    zs = z[~big]
    out[~big] = 0.5 - zs / 6.0 + zs * zs / 24.0
    return out


class Stepper:
    """One-step map for a fixed ``(ops, jn, dt, scheme)``.

    The exponential schemes work in coordinates where mass is the identity
    and ``A`` is diagonal; for a rotated basis these are the working
    coordinates themselves.
    """

    def __init__(self, ops: OperatorSet, jn: MollifiedPotential | None, dt: float, scheme: str = "etd1",
                 convection: bool = True, boundary: bool = True):
        if scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {scheme!r}")
        if not dt > 0:
            raise ValueError(f"dt must be positive, got {dt}")
        self.ops, self.jn, self.dt, self.scheme = ops, jn, float(dt), scheme
        self.convection, self.boundary = convection, boundary
        basis = ops.basis
        if scheme == "imex_euler":
            self._lhs = linalg.cho_factor(basis.mass_matrix + dt * ops.A_matrix)
            return
        if basis.rotated:
            self._V = None
            lam = ops.nu * basis.stokes_eigenvalues
        else:
            mu, V = linalg.eigh(ops.A_matrix, basis.mass_matrix)
            self._V, self._VtM = V, V.T @ basis.mass_matrix
            lam = mu
        z = dt * lam
        self._E = np.exp(-z)
        self._p1 = dt * _phi1(z)
        self._p2 = dt * _phi2(z)

    def rhs(self, a, return_xi: bool = False):
        return explicit_terms(a, self.ops, self.jn, self.convection, self.boundary, return_xi)

    def _to(self, a):
        return a if self._V is None else self._VtM @ a

    def _from(self, c):
        return c if self._V is None else self._V @ c

    def _project(self, load):
        """Load vector to the identity-mass coordinates."""
        return load if self._V is None else self._V.T @ load

    def advance(self, a, Na=None):
        """Advance coefficients by one step; ``Na`` may pass a precomputed ``N(a)``."""
        if Na is None:
            Na = self.rhs(a)
        if self.scheme == "imex_euler":
            try:
                return linalg.cho_solve(self._lhs, self.ops.basis.mass_matrix @ a + self.dt * Na)
            except (linalg.LinAlgError, ValueError) as exc:
                raise SolverFailure(str(exc)) from exc
        c, Nc = self._to(a), self._project(Na)
        c1 = self._E * c + self._p1 * Nc
        if self.scheme == "etd2":
            Nb = self._project(self.rhs(self._from(c1)))
            c1 = c1 + self._p2 * (Nb - Nc)
        return self._from(c1)

    def __call__(self, state: GalerkinState) -> GalerkinState:
        return GalerkinState(state.t + self.dt, self.advance(state.a))


def step(state: GalerkinState, ops: OperatorSet, jn: MollifiedPotential | None, dt: float,
         scheme: str = "etd1", convection: bool = True, boundary: bool = True) -> GalerkinState:
    """Advance ``state`` by one step of size ``dt``.

    Raises
    ------
    NonFiniteState
        If the new coefficient vector has non-finite entries.
    """
    if not state.finite:
        raise NonFiniteState("input state is not finite", step=0)
    out = Stepper(ops, jn, dt, scheme, convection, boundary)(state)
    if not out.finite:
        raise NonFiniteState("step produced a non-finite state", step=1)
    return out


# -- initial data ----------------------------------------------------------------


def initial_coefficients(spec, basis: DivFreeBasis, seed=None, gronwall_radius: float | None = None) -> np.ndarray:
    """Coefficient vector for a named initial condition.

    Parameters
    ----------
    spec : str, mapping or array
        ``"zero"``; ``{"random_H_ball": {"r": r, "seed": s}}`` (Gaussian
        direction scaled to ``|v0|_H = r``; ``"factor"`` instead of ``"r"``
        means a multiple of the Gronwall radius);
        ``{"eigenmode": {"k": k, "amp": amp}}``; or explicit coefficients.
    seed : int or numpy SeedSequence, optional
        Used when the spec carries no seed of its own.
    """
    N = basis.size
    if isinstance(spec, str):
        if spec == "zero":
            return np.zeros(N)
        raise ValueError(f"unknown initial condition {spec!r}")
    if isinstance(spec, dict):
        if len(spec) != 1:
            raise ValueError(f"initial condition mapping needs exactly one key, got {sorted(spec)}")
        (name, args), = spec.items()
        args = dict(args or {})
        if name == "zero":
            return np.zeros(N)
        if name == "random_H_ball":
            if "factor" in args:
                if gronwall_radius is None:
                    raise ValueError("'factor' initial radius needs the Gronwall radius")
                r = float(args["factor"]) * gronwall_radius
            else:
                r = float(args["r"])
            rng = np.random.default_rng(args.get("seed", seed))
            a = rng.standard_normal(N)
            return r * a / basis.norm_H(a)
        if name == "eigenmode":
            k = int(args["k"])
            if not basis.rotated:
                raise ValueError("eigenmode initial data needs a Stokes-rotated basis")
            a = np.zeros(N)
            a[k] = float(args.get("amp", 1.0))
            return a
        raise ValueError(f"unknown initial condition {name!r}")
    a = np.asarray(spec, dtype=float)
    if a.shape != (N,):
        raise ValueError(f"initial coefficients must have shape ({N},), got {a.shape}")
    return a.copy()


# -- trajectories ----------------------------------------------------------------


def _dual_factor(basis: DivFreeBasis):
    """``L^{-1}`` with ``S = L L^T``, so ``|r|_{V*} = |L^{-1} r|``."""
    return linalg.solve_triangular(linalg.cholesky(basis.stiffness_matrix, lower=True), np.eye(basis.size),
                                   lower=True)


def run(params: FlowParameters, basis: DivFreeBasis, ops: OperatorSet, audit=None,
        jn: MollifiedPotential | None = None, store_boundary: bool = True, config_hash: str | None = None,
        monitor=None) -> Trajectory:
    """Integrate from ``params.v0`` to ``params.t_end`` and fill the norm channels.

    When ``audit`` is given its certificate is checked first, the blow-up
    guard is active, and ``energy_log`` is filled with the per-step energy
    slack.  ``monitor`` is an optional callable ``(k, t, a)`` for progress
    reporting.
    """
    if ops.basis is not basis:
        raise ValueError("operators were assembled on a different basis")
    if jn is None and params.boundary:
        jn = mollify(params.superpotential(), params.n_mollify)
    radius = None
    if audit is not None:
        from .geometry import trace_norm

        g = audit.gamma_norm
        if not audit.d2 * g * g < params.nu:
            raise InvalidCertificate(f"d2 = {audit.d2} violates d2 < nu/|gamma|^2 = {params.nu / g**2}",
                                     witness=audit.d2)
        if not np.isclose(g, trace_norm(basis), rtol=1e-8):
            raise InvalidCertificate("audit trace norm does not match the basis", witness=g)
        radius = audit.gronwall_radius
    a = initial_coefficients(params.v0, basis, params.seed, radius)
    stepper = Stepper(ops, jn, params.dt, params.scheme, params.convection, params.boundary)
    n = params.n_steps
    N, Nb = basis.size, basis.bottom_x1.size
    Linv = _dual_factor(basis)
    Mm, S = basis.mass_matrix, basis.stiffness_matrix
    A = np.empty((n + 1, N))
    vprime = np.empty(n + 1)
    vN = np.empty((n + 1, Nb)) if store_boundary else None
    xi = np.empty((n + 1, Nb)) if store_boundary else None
    flags: list = []
    lo, hi = params.scan_range
    guard = BLOWUP_FACTOR * radius if radius else math.inf
    ckpt = Path(params.checkpoint_dir) if params.checkpoint_every and params.checkpoint_dir else None
    for k in range(n + 1):
        if not np.all(np.isfinite(a)):
            raise NonFiniteState(f"non-finite coefficients at step {k}", step=k)
        A[k] = a
        Na, vn, x = stepper.rhs(a, return_xi=True)
        vprime[k] = np.linalg.norm(Linv @ (Na - ops.A_matrix @ a))
        if store_boundary:
            vN[k], xi[k] = vn, x
        if params.boundary and (vn.min() < lo or vn.max() > hi):
            flags.append({"flag": "scan_range_exceeded", "step": k, "vN_min": float(vn.min()),
                          "vN_max": float(vn.max())})
        nh = math.sqrt(max(a @ Mm @ a, 0.0))
        if nh > guard:
            raise NonFiniteState(f"|v|_H = {nh:.3e} exceeds {BLOWUP_FACTOR:g} x Gronwall radius at step {k}",
                                 step=k)
        if ckpt is not None and k % params.checkpoint_every == 0:
            io.save_checkpoint(ckpt / f"step_{k:08d}.npz", config_hash or "", k, k * params.dt, a)
        if monitor is not None:
            monitor(k, k * params.dt, a)
        if k < n:
            a = stepper.advance(a, Na)
    t = np.arange(n + 1) * params.dt
    norm_H = np.sqrt(np.maximum(np.einsum("ki,ij,kj->k", A, Mm, A), 0.0))
    norm_V = np.sqrt(np.maximum(np.einsum("ki,ij,kj->k", A, S, A), 0.0))
    fd = np.empty(n + 1)
    if n > 0:
        dA = np.diff(A, axis=0) / params.dt
        fd[1:] = np.linalg.norm(Linv @ (Mm @ dA.T), axis=0)
        fd[0] = fd[1]
    else:
        fd[:] = 0.0
    meta = {"parameters": params.to_dict(), "basis": basis.key(), "N": N, "n_steps": n,
            "potential": jn.name if jn is not None else None, "config_hash": config_hash}
    traj = Trajectory(t, A, norm_H, norm_V, vprime, fd, vN, xi, None, meta, flags)
    if audit is not None:
        rep = energy_monitor(traj, audit)
        traj.energy_log = rep.slack
        if rep.violations:
            warnings.warn(f"energy inequality exceeded tolerance on {rep.violations} steps", EnergyViolation)
            traj.flags.append({"flag": "energy_violation", "count": rep.violations})
    return traj


def reference_integrate(ops: OperatorSet, jn, a0, t_end: float, dt_ref: float, convection: bool = True,
                        boundary: bool = True, sample_every: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Classical RK4 on the full (unsplit) system ``M a' = N(a) - A a``.

    Runs in the compiled kernel when the potential is piecewise polynomial.
    Returns sample times and coefficients every ``sample_every`` steps.
    """
    n = int(round(t_end / dt_ref))
    a0 = np.asarray(a0, dtype=float)
    Minv = linalg.inv(ops.basis.mass_matrix)
    Lin = ops.G_matrix - ops.A_matrix
    use_boundary = bool(boundary and jn is not None)
    if (not use_boundary) or jn.base.is_polynomial:
        from . import kernels
        from .potential import _gauss01, bump_constant

        B = ops.B_tensor if (convection and ops.B_tensor is not None) else np.zeros((0, 0, 0))
        if convection and ops.B_tensor is None:
            raise ValueError("compiled reference integration needs the dense convection tensor")
        if use_boundary:
            bps, table = jn._table()
            nodes, weights = _gauss01(jn.quad_points)
            nm = jn.n
        else:
            bps, table, nodes, weights, nm = np.zeros(0), np.zeros((1, 1)), np.zeros(1), np.zeros(1), 1
        out = kernels.galerkin_rk4(a0, dt_ref, n, sample_every, Minv, Lin, ops.F_vector, B,
                                   ops.basis.trace_normal, ops.basis.bottom_w, bps, table, nm, nodes, weights,
                                   bump_constant(), use_boundary)
        return np.arange(out.shape[0]) * (dt_ref * sample_every), out

    def f(a):
        return Minv @ (explicit_terms(a, ops, jn, convection, boundary) - ops.A_matrix @ a)

    a = a0.copy()
    ts, out = [0.0], [a.copy()]
    h = dt_ref
    for k in range(1, n + 1):
        k1 = f(a)
        k2 = f(a + 0.5 * h * k1)
        k3 = f(a + 0.5 * h * k2)
        k4 = f(a + h * k3)
        a = a + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if k % sample_every == 0:
            ts.append(k * h)
            out.append(a.copy())
    return np.array(ts), np.array(out)


# -- monitors --------------------------------------------------------------------


@dataclass
class EnergyReport:
    """Per-step slack of the discrete energy inequality and its integrated form."""

    slack: np.ndarray
    tol: np.ndarray
    violations: int
    integrated_excess: np.ndarray
    integrated_budget: np.ndarray
    forcing_level: float

    @property
    def integrated_ok(self) -> bool:
        return bool(np.all(self.integrated_excess <= self.integrated_budget))

    @property
    def max_excess(self) -> float:
        return float(np.max(self.slack - self.tol)) if self.slack.size else -math.inf

    def to_dict(self) -> dict:
        return {"steps": int(self.slack.size), "violations": self.violations, "max_excess": self.max_excess,
                "integrated_ok": self.integrated_ok, "forcing_level": self.forcing_level}


def energy_monitor(traj: Trajectory, audit, c_tol: float = 10.0) -> EnergyReport:
    """Check ``(|v^{k+1}|_H^2 - |v^k|_H^2)/(2 dt) + C1 |v^{k+1}|^2 <= C2 (1 + |F|^2)`` step by step.

    A step counts as a violation when its slack exceeds
    ``c_tol * dt * max(1, |v^{k+1}|^2)``.
    """
    dt = traj.dt
    h2, v2 = traj.norm_H**2, traj.norm_V**2
    Phi = audit.Phi
    if traj.t.size < 2:
        empty = np.zeros(0)
        return EnergyReport(empty, empty, 0, empty, empty, Phi)
    slack = (h2[1:] - h2[:-1]) / (2 * dt) + audit.C1 * v2[1:] - Phi
    tol = c_tol * dt * np.maximum(1.0, v2[1:])
    viol = int(np.count_nonzero(slack > tol))
    excess = np.cumsum(dt * slack)
    budget = np.cumsum(dt * tol)
    return EnergyReport(slack, tol, viol, excess, budget, Phi)


@dataclass
class VPrimeReport:
    lhs: np.ndarray
    rhs: np.ndarray
    violations: int

    @property
    def max_ratio(self) -> float:
        return float(np.max(self.lhs / self.rhs)) if self.lhs.size else 0.0

    def to_dict(self) -> dict:
        return {"samples": int(self.lhs.size), "violations": self.violations, "max_ratio": self.max_ratio}


def vprime_bound(C3: float, norm_H, norm_V):
    """``C3 (1 + |v| + |v|_H^{1/2} |v|^{3/2})``."""
    norm_H, norm_V = np.asarray(norm_H, dtype=float), np.asarray(norm_V, dtype=float)
    return C3 * (1.0 + norm_V + np.sqrt(norm_H) * norm_V**1.5)


def vprime_monitor(traj: Trajectory, audit) -> VPrimeReport:
    """Check the derivative bound at every sample with the residual-based ``|v'|_{V*}``."""
    rhs = vprime_bound(audit.C3, traj.norm_H, traj.norm_V)
    return VPrimeReport(traj.vprime.copy(), rhs, int(np.count_nonzero(traj.vprime > rhs)))
