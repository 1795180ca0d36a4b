"""Invariant suites run by the ``verify-operators`` and ``verify-potential`` commands.

Each suite returns a list of :class:`Check` records; a suite passes when
every check does.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .operators import boundary_identity_check, lift_bound_radius, lift_bound_violations
from .potential import clarke_interval, constant_stability_scan
from .geometry import trace_norm, poincare_lambda1

__all__ = ["Check", "operator_suite", "potential_suite", "suite_passed"]


@dataclass
class Check:
    name: str
    value: float
    threshold: float
    passed: bool
    detail: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def _le(name, value, threshold, detail=""):
    value = float(value)
    return Check(name, value, float(threshold), bool(value <= threshold), detail)


def suite_passed(checks) -> bool:
    return all(c.passed for c in checks)


def operator_suite(problem, draws: int = 100, lift_draws: int = 1000, rng=None) -> list[Check]:
    """Geometry and operator invariants on the assembled problem."""
    rng = np.random.default_rng(rng)
    basis, ops, geom = problem.basis, problem.ops, problem.geometry
    f, w = basis.quadrature_fields, basis.grid.w
    out = []
    out.append(_le("divergence_max", np.abs(f.divergence).max(), 1e-12, "all modes, all interior nodes"))
    x1 = basis.bottom_x1
    top = basis.fields(x1, geom.h(x1))
    bot = basis.fields(x1, np.zeros_like(x1))
    out.append(_le("top_wall_velocity_max", max(np.abs(top.v1).max(), np.abs(top.v2).max()), 1e-12))
    out.append(_le("bottom_tangential_max", np.abs(bot.v1).max(), 1e-12))
    out.append(_le("mass_asymmetry", np.abs(basis.mass_matrix - basis.mass_matrix.T).max(), 1e-12))
    out.append(_le("stiffness_asymmetry", np.abs(basis.stiffness_matrix - basis.stiffness_matrix.T).max(), 1e-12))
    rr = (f.omega * w[:, None]).T @ f.omega
    out.append(_le("rot_grad_identity", np.abs(rr - basis.stiffness_matrix).max(), 1e-10,
                   "max over basis pairs of |(rot v_i, rot v_j) - (grad v_i, grad v_j)|"))
    worst_A = worst_B = 0.0
    for _ in range(draws):
        u, v = rng.standard_normal(ops.size), rng.standard_normal(ops.size)
        nv2 = basis.norm_V(v) ** 2
        worst_A = max(worst_A, abs(v @ ops.A_matrix @ v - ops.nu * nv2) / (ops.nu * nv2))
        worst_B = max(worst_B, abs(ops.B_form(u, v, v)) / (basis.norm_V(u) * nv2))
    out.append(_le("A_coercivity_identity", worst_A, 1e-10, f"{draws} random vectors, relative"))
    out.append(_le("B_antisymmetry", worst_B, 1e-8, f"{draws} random pairs, relative to |u||v|^2"))
    ident = boundary_identity_check(ops, samples=10, rng=rng)
    out.append(_le("convection_interior_form", ident.interior_residual, 1e-10))
    out.append(_le("convection_boundary_form", ident.boundary_residual, 1e-10))
    lam = ops.lift.lam
    radius = lift_bound_radius(ops)
    out.append(_le("lift_spectral_radius", radius, lam, "best constant in |<B(v,w),v>| <= c |v|^2"))
    out.append(_le("lift_random_violations", lift_bound_violations(ops, lift_draws, rng, lam), 0,
                   f"{lift_draws} draws"))
    out.append(Check("trace_norm", trace_norm(basis), float("nan"), True, "reported"))
    out.append(Check("poincare_lambda1", poincare_lambda1(basis), float("nan"), True, "reported"))
    out.append(Check("stiffness_condition", basis.stiffness_condition, float("nan"), True, "reported"))
    return out


def potential_suite(problem, n_list=None, threshold: float | None = None) -> tuple[list[Check], dict]:
    """Certification of ``j_n`` plus the stability scan over mollification indices."""
    pot = problem.config["potential"]
    ph = problem.config["physics"]
    n_list = n_list or pot["stability_n"]
    threshold = threshold or pot["drift_threshold"]
    gamma = problem.audit.gamma_norm
    scan = (pot["scan"]["lo"], pot["scan"]["hi"], pot["scan"]["points"])
    st = constant_stability_scan(problem.potential, n_list, scan, ph["nu"], gamma, threshold,
                                 margin=pot["margin"])
    cert = problem.certificate
    out = [
        _le("d2_margin", cert.d2, cert.margin * cert.d2_limit, "d2 < margin * nu/|gamma|^2"),
        Check("stability_N0", float(st.N0) if st.N0 is not None else float("nan"), float(max(n_list)),
              st.N0 is not None, f"first n with drift < {threshold}"),
    ]
    for b in problem.potential.breakpoints:
        lo, hi = clarke_interval(problem.potential, b)
        out.append(Check(f"clarke_interval_at_{b:g}", hi - lo, float("nan"), lo <= hi, f"[{lo}, {hi}]"))
    return out, {"certificate": cert.to_dict(), "stability": st.to_dict()}
