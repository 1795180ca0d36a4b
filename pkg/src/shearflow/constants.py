"""Named constants of the a-priori estimates, with the formulas that produce them.

Notation used in the formulas below::

    g   = ||gamma||                (trace norm)
    Phi = C2 (1 + ||F||^2)         (energy forcing level)
    k   = C1 lambda1               (Gronwall rate)
    X   = ||v||^2_{L^inf(0,1;H)}   (initial window level)

Energy estimate:      1/2 d/dt |v|_H^2 + C1 |v|^2 <= Phi
Gronwall envelope:    |v(t)|_H^2 <= e^{k(1-t)} X + Phi/k
Window estimate 1:    |v|^2_{L2(h,h+1;V)} + |v|^2_{Linf(h,h+1;H)} <= C4 + C5 X e^{-C6 h}
Window estimate 2:    |v'|^{4/3}_{L4/3(h,h+1;V*)} <= C7 + C8 X^{4/3} e^{-C9 h}
Absorbing estimate:   |T(s) v|_{F^b} <= R0 + C X^{beta/2} e^{-delta s}
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

from .errors import InvalidCertificate
from .potential import PotentialCertificate

__all__ = ["ConstantsAudit", "compute_constants", "ladyzhenskaya_constant", "coupling_norm"]


@dataclass
class ConstantsAudit:
    values: dict
    formulas: dict
    inputs: dict
    notes: dict = field(default_factory=dict)

    def __getattr__(self, name):
        values = self.__dict__.get("values", {})
        if name in values:
            return values[name]
        raise AttributeError(name)

    @property
    def Phi(self) -> float:
        """``C2 (1 + ||F||^2)``."""
        return self.values["C2"] * (1.0 + self.values["F_dual_norm"] ** 2)

    @property
    def kappa(self) -> float:
        return self.values["C1"] * self.values["lambda1"]

    @property
    def gronwall_radius(self) -> float:
        return math.sqrt(self.Phi / self.kappa)

    def gronwall_envelope(self, t, X: float):
        """Right-hand side of the pointwise Gronwall bound for ``|v(t)|_H^2``."""
        t = np.asarray(t, dtype=float)
        return np.exp(self.kappa * (1.0 - t)) * X + self.Phi / self.kappa

    def envelope_crossing(self, X: float, radius: float) -> float:
        """Time at which the Gronwall envelope drops to ``radius**2``."""
        excess = radius**2 - self.Phi / self.kappa
        if excess <= 0:
            return math.inf
        if X <= excess:
            return 0.0
        return 1.0 + math.log(X / excess) / self.kappa

    def absorbing_bound(self, s, x: float):
        """``R0 + C x^beta e^{-delta s}`` with ``x = ||v||_{L^inf(0,1;H)}``."""
        v = self.values
        return v["R0"] + v["C_abs"] * x ** v["beta"] * np.exp(-v["delta"] * np.asarray(s, dtype=float))

    def absorption_time(self, fb0: float) -> float:
        """Shift after which the absorbing estimate guarantees ``<= 2 R0``."""
        v = self.values
        arg = v["C_abs"] * fb0 ** v["beta"] / v["R0"]
        return max(0.0, math.log(arg) / v["delta"]) if arg > 0 else 0.0

    def to_dict(self) -> dict:
        return {
            "constants": {k: {"value": self.values[k], "formula": self.formulas.get(k, "input")}
                          for k in self.values},
            "inputs": self.inputs,
            "notes": self.notes,
        }


def coupling_norm(G: np.ndarray, stiffness: np.ndarray) -> float:
    """Operator norm of ``a -> G a`` from (span, V-norm) to its dual."""
    Linv = linalg.inv(linalg.cholesky(stiffness, lower=True))
    return float(linalg.norm(Linv @ G @ Linv.T, 2))


def ladyzhenskaya_constant(basis, samples: int = 400, refine: int = 4, rng=None) -> tuple[float, dict]:
    """Estimate ``sup ||v||_{L4} / (||v||_H^{1/2} ||v||^{1/2})`` over the span.

    Protocol: Gaussian coefficient draws with spectral weights ``mu^{-p}``,
    ``p`` in {0, 1/2, 1}, plus every single basis mode; the ``refine`` best
    candidates are then locally maximized with L-BFGS.  Returns the estimate
    and a record of the protocol.
    """
    rng = np.random.default_rng(rng)
    f, w = basis.quadrature_fields, basis.grid.w
    M, S = basis.mass_matrix, basis.stiffness_matrix
    mu = np.maximum(np.diag(S), 1e-300)

    def ratio(a):
        v1, v2 = f.v1 @ a, f.v2 @ a
        l4 = np.sum(w * (v1 * v1 + v2 * v2) ** 2) ** 0.25
        h = math.sqrt(max(a @ M @ a, 1e-300))
        vv = math.sqrt(max(a @ S @ a, 1e-300))
        return l4 / math.sqrt(h * vv)

    cands = [np.eye(basis.size)[i] for i in range(basis.size)]
    for p in (0.0, 0.5, 1.0):
        cands += [rng.standard_normal(basis.size) * mu ** (-p) for _ in range(samples // 3)]
    scores = np.array([ratio(a) for a in cands])
    best = float(scores.max())
    order = np.argsort(scores)[::-1][:refine]
    for i in order:
        res = optimize.minimize(lambda a: -ratio(a), cands[i], method="L-BFGS-B",
                                options={"maxiter": 200})
        best = max(best, -float(res.fun))
    return best, {"draws": len(cands), "weights": "mu^-p, p in {0, 0.5, 1}", "refined": int(refine),
                  "sample_max": float(scores.max())}


def compute_constants(nu: float, gamma_norm: float, lambda1: float, certificate: PotentialCertificate,
                      F_dual_norm: float, ladyzhenskaya_const: float, boundary_measure: float = 1.0,
                      coupling: float = 0.0, lift_lambda: float | None = None) -> ConstantsAudit:
    """Mechanical evaluation of every constant in the estimates chain.

    ``coupling`` is the norm of ``G`` (from :func:`coupling_norm`), which
    enters the derivative bound; ``lift_lambda`` is the lift smallness and
    must not exceed ``(nu - d2 g^2)/4``.
    """
    c1, c2, d1, d2 = certificate.c1, certificate.c2, certificate.d1, certificate.d2
    g, lam1, F, CL, m = gamma_norm, lambda1, F_dual_norm, ladyzhenskaya_const, boundary_measure
    gap = nu - d2 * g * g
    C1 = gap / 2.0
    if not C1 > 0:
        raise InvalidCertificate(f"nu - d2 |gamma|^2 = {gap:.6g} is not positive", witness=d2)
    eps = gap / 4.0
    if lift_lambda is not None and lift_lambda > eps * (1 + 1e-12):
        raise InvalidCertificate(
            f"lift smallness {lift_lambda} exceeds (nu - d2 |gamma|^2)/4 = {eps:.6g}", witness=lift_lambda)
    C2 = max(1.0 / (4.0 * eps), abs(d1) * m)
    C3 = max(F + c1 * math.sqrt(m) * g, c2 * g * g + nu + coupling, CL * CL * lam1 ** (-0.25))
    C10 = 2.0 * 3.0 ** (1.0 / 3.0) * C3 ** (4.0 / 3.0)

    Phi = C2 * (1.0 + F * F)
    kappa = C1 * lam1
    C4 = Phi / C1 + Phi / (2.0 * C1 * C1 * lam1) + Phi / kappa
    C5 = math.exp(kappa) * (1.0 + 1.0 / (2.0 * C1))
    C6 = kappa
    P = Phi / C1 + Phi / (2.0 * C1 * C1 * lam1)
    Q = math.exp(kappa) / (2.0 * C1)
    alpha = 1.0 + (Phi / kappa) ** (1.0 / 3.0)
    beta3 = math.exp(kappa / 3.0)
    C7 = C10 * (1.0 + alpha * P + alpha * Q + beta3 * P)
    C8 = C10 * (alpha * Q + beta3 * P + beta3 * Q)
    C9 = 4.0 * kappa / 3.0
    R0 = 2.0 * math.sqrt(C4) + C7 ** 0.75 + 2.0 * math.sqrt(C5)
    C_abs = 2.0 * math.sqrt(C5) + C8 ** 0.75
    beta = 2.0
    delta = min(C6 / 2.0, 3.0 * C9 / 4.0)

    values = {
        "nu": nu, "gamma_norm": g, "lambda1": lam1, "c1": c1, "c2": c2, "d1": d1, "d2": d2,
        "F_dual_norm": F, "boundary_measure": m, "ladyzhenskaya": CL, "coupling_norm": coupling,
        "epsilon": eps, "C1": C1, "C2": C2, "C3": C3, "C10": C10,
        "C4": C4, "C5": C5, "C6": C6, "C7": C7, "C8": C8, "C9": C9,
        "R0": R0, "C_abs": C_abs, "beta": beta, "delta": delta,
    }
    formulas = {
        "epsilon": "(nu - d2 g^2)/4  (Cauchy parameter, also the admissible lift smallness)",
        "C1": "(nu - d2 g^2)/2",
        "C2": "max(1/(4 epsilon), |d1| m(Gamma_0))",
        "C3": "max(||F|| + c1 sqrt(m) g, c2 g^2 + nu + ||G||, C_L^2 lambda1^(-1/4))",
        "C10": "2 * 3^(1/3) * C3^(4/3)",
        "C4": "Phi/C1 + Phi/(2 C1^2 lambda1) + Phi/(C1 lambda1)",
        "C5": "e^k (1 + 1/(2 C1))",
        "C6": "k = C1 lambda1",
        "C7": "C10 (1 + a P + a Q + b P),  P = Phi/C1 + Phi/(2 C1^2 lambda1), Q = e^k/(2 C1),"
              " a = 1 + (Phi/k)^(1/3), b = e^(k/3)",
        "C8": "C10 (a Q + b P + b Q)",
        "C9": "4 k / 3",
        "R0": "2 sqrt(C4) + C7^(3/4) + 2 sqrt(C5)",
        "C_abs": "2 sqrt(C5) + C8^(3/4)",
        "beta": "2 (power of ||v||_{Linf(0,1;H)})",
        "delta": "min(C6/2, 3 C9/4)",
    }
    inputs = {"certificate": certificate.to_dict(), "lift_lambda": lift_lambda}
    return ConstantsAudit(values, formulas, inputs)
