"""Long-time diagnostics: shift semigroup, window norms and absorbing estimates.

The window norm of a trajectory on ``[h, h+1]`` is

    |v|_{L2(h,h+1;V)} + |v|_{Linf(h,h+1;H)} + |v'|_{L4/3(h,h+1;V*)},

and the ``F^b`` norm is its supremum over ``h >= 0``.  Integrals use the
trapezoid rule on the sample grid; ``v'`` is the residual-based channel.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .constants import ConstantsAudit
from .errors import HorizonTooShort, ShiftBeyondHorizon, WindowBeyondHorizon
from .simulate import FlowParameters, Trajectory, run

__all__ = [
    "WindowNorms",
    "WindowTable",
    "FBNorm",
    "GronwallReport",
    "Lemma41Report",
    "AbsorbingReport",
    "AttractorReport",
    "shift",
    "window_norms",
    "window_table",
    "fb_norm",
    "gronwall_check",
    "lemma41_check",
    "absorbing_check",
    "fit_decay",
    "ensemble_sections",
]

_GRID_TOL = 1e-9


def _steps(traj: Trajectory, t: float) -> tuple[int, float]:
    """Nearest sample index for time offset ``t`` and the offset from it."""
    dt = traj.dt
    if dt == 0.0:
        return 0, float(t)
    k = int(round(t / dt))
    return k, float(t - k * dt)


def shift(traj: Trajectory, t: float) -> Trajectory:
    """``(T(t) v)(s) = v(s + t)`` on the sample grid.

    Non-aligned ``t`` snaps to the nearest sample; the offset is recorded in
    ``metadata["shift_offset"]``.
    """
    if t < 0:
        raise ValueError(f"shift must be nonnegative, got {t}")
    if t > traj.horizon + _GRID_TOL * max(1.0, traj.horizon):
        raise ShiftBeyondHorizon(f"shift {t} beyond horizon {traj.horizon}", witness=t)
    k, off = _steps(traj, t)
    k = min(k, traj.n_samples - 1)
    m = traj.n_samples - k
    cut = (lambda x: None if x is None else x[k:])
    meta = dict(traj.metadata)
    meta["shift_steps"] = meta.get("shift_steps", 0) + k
    meta["shift"] = meta["shift_steps"] * traj.dt
    meta["shift_offset"] = meta.get("shift_offset", 0.0) + off
    elog = None if traj.energy_log is None else traj.energy_log[k:]
    return Trajectory(t=traj.t[:m] - traj.t[0], a=traj.a[k:], norm_H=traj.norm_H[k:], norm_V=traj.norm_V[k:],
                      vprime=traj.vprime[k:], vprime_fd=traj.vprime_fd[k:], vN=cut(traj.vN), xi=cut(traj.xi),
                      energy_log=elog, metadata=meta, flags=list(traj.flags))


@dataclass(frozen=True)
class WindowNorms:
    h: float
    l2V: float
    linfH: float
    l43dual: float

    @property
    def f_norm(self) -> float:
        return self.l2V + self.linfH + self.l43dual


@dataclass
class WindowTable:
    """Window norms for a grid of window starts (vectorized :class:`WindowNorms`)."""

    h: np.ndarray
    l2V: np.ndarray
    linfH: np.ndarray
    l43dual: np.ndarray
    length: float = 1.0

    @property
    def f_norm(self) -> np.ndarray:
        return self.l2V + self.linfH + self.l43dual

    def __len__(self) -> int:
        return int(self.h.size)

    def row(self, i: int) -> WindowNorms:
        return WindowNorms(float(self.h[i]), float(self.l2V[i]), float(self.linfH[i]), float(self.l43dual[i]))


def _window_count(traj: Trajectory, length: float) -> int:
    n = int(round(length / traj.dt))
    if n < 1:
        raise HorizonTooShort(f"sample spacing {traj.dt} too coarse for a window of length {length}")
    return n


def _trapz_windows(f: np.ndarray, start: np.ndarray, w: int, dt: float) -> np.ndarray:
    c = np.concatenate([[0.0], np.cumsum(f)])
    total = c[start + w + 1] - c[start]
    return dt * (total - 0.5 * (f[start] + f[start + w]))


def _window_max(f: np.ndarray, start: np.ndarray, w: int) -> np.ndarray:
    view = np.lib.stride_tricks.sliding_window_view(f, w + 1)
    return view[start].max(axis=1)


def window_table(traj: Trajectory, dh: float | None = None, length: float = 1.0,
                 starts: np.ndarray | None = None) -> WindowTable:
    """Window norms on ``h in {0, dh, 2 dh, ...}`` with ``h + length <= horizon``.

    ``dh`` defaults to ``10 dt`` and is rounded to a whole number of samples.
    """
    if traj.horizon < length - _GRID_TOL:
        raise HorizonTooShort(f"horizon {traj.horizon} shorter than window length {length}",
                              witness=traj.horizon)
    dt = traj.dt
    w = _window_count(traj, length)
    if starts is None:
        stride = max(1, int(round((10 * dt if dh is None else dh) / dt)))
        starts = np.arange(0, traj.n_samples - w, stride)
    starts = np.asarray(starts, dtype=int)
    l2 = np.sqrt(np.maximum(_trapz_windows(traj.norm_V**2, starts, w, dt), 0.0))
    linf = _window_max(traj.norm_H, starts, w)
    l43 = np.maximum(_trapz_windows(traj.vprime ** (4.0 / 3.0), starts, w, dt), 0.0) ** 0.75
    return WindowTable(traj.t[starts], l2, linf, l43, length)


def window_norms(traj: Trajectory, h: float) -> WindowNorms:
    """Norms of the restriction of ``traj`` to ``[h, h+1]``."""
    if h < 0 or h + 1.0 > traj.horizon + _GRID_TOL * max(1.0, traj.horizon):
        raise WindowBeyondHorizon(f"window [{h}, {h + 1}] exceeds horizon {traj.horizon}", witness=h)
    k, _ = _steps(traj, h)
    return window_table(traj, starts=np.array([k])).row(0)


@dataclass(frozen=True)
class FBNorm:
    """Discretized ``F^b`` norm: a lower bound (grid sup) and an upper estimate.

    The upper estimate takes the sup over windows of length ``1 + dh``,
    each of which contains every unit window starting between two
    neighbouring grid points.
    """

    value: float
    upper: float
    dh: float
    n_windows: int

    def __float__(self) -> float:
        return self.value


def fb_norm(traj: Trajectory, dh: float | None = None) -> FBNorm:
    if traj.horizon < 1.0 - _GRID_TOL:
        raise HorizonTooShort(f"horizon {traj.horizon} < 1", witness=traj.horizon)
    dt = traj.dt
    stride = max(1, int(round((10 * dt if dh is None else dh) / dt)))
    tab = window_table(traj, stride * dt)
    lower = float(tab.f_norm.max())
    w = _window_count(traj, 1.0)
    starts = np.arange(0, traj.n_samples - w, stride)
    starts = starts[starts + w + stride < traj.n_samples]
    upper = lower
    if starts.size:
        big = window_table(traj, length=(w + stride) * dt, starts=starts)
        upper = max(lower, float(big.f_norm.max()))
    return FBNorm(lower, upper, stride * dt, len(tab))


# -- checks against the audited constants -----------------------------------------


def _x_level(traj: Trajectory) -> float:
    """``|v|^2_{Linf(0,1;H)}``."""
    return window_norms(traj, 0.0).linfH ** 2


@dataclass
class GronwallReport:
    max_relative_excess: float
    violations: int
    entry_time: float
    predicted_crossing: float
    envelope_time: float
    radius: float
    X: float

    @property
    def holds(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("max_relative_excess", "violations", "entry_time",
                                              "predicted_crossing", "envelope_time", "radius", "X")}


def gronwall_check(traj: Trajectory, audit: ConstantsAudit, tol: float = 1e-2) -> GronwallReport:
    """Pointwise check of ``|v(t)|_H^2 <= e^{k(1-t)} X + Phi/k`` along ``traj``.

    ``entry_time`` is the first sample time after which ``|v|_H`` stays
    within ``(1 + tol)`` times the Gronwall radius; ``predicted_crossing``
    is when the envelope itself drops to that radius, and
    ``envelope_time`` is when its transient part falls to ``Phi/k``.
    """
    X = _x_level(traj)
    env = audit.gronwall_envelope(traj.t, X)
    h2 = traj.norm_H**2
    rel = (h2 - env) / env
    viol = int(np.count_nonzero(rel > 1e-12))
    radius = (1.0 + tol) * audit.gronwall_radius
    outside = np.nonzero(traj.norm_H > radius)[0]
    if outside.size == 0:
        entry = 0.0
    elif outside[-1] == traj.n_samples - 1:
        entry = math.inf
    else:
        entry = float(traj.t[outside[-1] + 1])
    k = audit.kappa
    env_time = 1.0 + math.log(max(X * k / audit.Phi, 1.0)) / k if X > 0 else 0.0
    return GronwallReport(float(rel.max()), viol, entry, audit.envelope_crossing(X, radius), env_time,
                          radius, X)


@dataclass
class Lemma41Report:
    h: np.ndarray
    lhs_energy: np.ndarray
    rhs_energy: np.ndarray
    lhs_derivative: np.ndarray
    rhs_derivative: np.ndarray

    @property
    def violations(self) -> int:
        return int(np.count_nonzero(self.lhs_energy > self.rhs_energy)
                   + np.count_nonzero(self.lhs_derivative > self.rhs_derivative))

    def to_dict(self) -> dict:
        return {"windows": int(self.h.size), "violations": self.violations,
                "max_ratio_energy": float(np.max(self.lhs_energy / self.rhs_energy)),
                "max_ratio_derivative": float(np.max(self.lhs_derivative / self.rhs_derivative))}


def lemma41_check(traj: Trajectory, audit: ConstantsAudit, dh: float | None = None) -> Lemma41Report:
    """Both window estimates at every grid ``h``.

    ``l2V^2 + linfH^2 <= C4 + C5 X e^{-C6 h}`` and
    ``l43dual^{4/3} <= C7 + C8 X^{4/3} e^{-C9 h}`` with ``X = |v|^2_{Linf(0,1;H)}``.
    """
    tab = window_table(traj, dh)
    X = _x_level(traj)
    c = audit.values
    lhs1 = tab.l2V**2 + tab.linfH**2
    rhs1 = c["C4"] + c["C5"] * X * np.exp(-c["C6"] * tab.h)
    lhs2 = tab.l43dual ** (4.0 / 3.0)
    rhs2 = c["C7"] + c["C8"] * X ** (4.0 / 3.0) * np.exp(-c["C9"] * tab.h)
    return Lemma41Report(tab.h, lhs1, rhs1, lhs2, rhs2)


@dataclass
class AbsorbingReport:
    s: np.ndarray
    fb_shifted: np.ndarray
    bound: np.ndarray
    fb0: float
    s0: float
    R0: float

    @property
    def violations(self) -> int:
        """Grid shifts where the absorbing estimate fails."""
        return int(np.count_nonzero(self.fb_shifted > self.bound))

    @property
    def absorbed_violations(self) -> int:
        """Grid shifts ``s >= s0`` with ``|T(s) v|_{F^b} > 2 R0``."""
        late = self.s >= self.s0
        return int(np.count_nonzero(self.fb_shifted[late] > 2.0 * self.R0))

    def to_dict(self) -> dict:
        return {"shifts": int(self.s.size), "fb0": self.fb0, "s0": self.s0, "R0": self.R0,
                "violations": self.violations, "absorbed_violations": self.absorbed_violations,
                "max_fb_shifted": float(self.fb_shifted.max())}


def absorbing_check(traj: Trajectory, audit: ConstantsAudit, dh: float | None = None) -> AbsorbingReport:
    """``|T(s) v|_{F^b} <= R0 + C fb0^beta e^{-delta s}`` on the window grid.

    ``fb0`` is the norm of the first window.  Since shifting drops the
    leading windows, ``|T(s) v|_{F^b}`` on the grid is a suffix maximum of
    the window norms.
    """
    tab = window_table(traj, dh)
    f = tab.f_norm
    shifted = np.maximum.accumulate(f[::-1])[::-1]
    fb0 = float(f[0])
    c = audit.values
    bound = audit.absorbing_bound(tab.h, fb0)
    return AbsorbingReport(tab.h, shifted, bound, fb0, audit.absorption_time(fb0), c["R0"])


def fit_decay(s: np.ndarray, fb: np.ndarray, floor: float = 1e-10, rel: float = 1e-3) -> float | None:
    """Empirical decay rate of ``fb(s) - fb(inf)`` by a log-linear fit (``None`` if degenerate).

    ``fb(inf)`` is taken as the last value, so only points whose excess is
    above ``rel`` times the largest excess enter the fit.
    """
    s, fb = np.asarray(s, dtype=float), np.asarray(fb, dtype=float)
    excess = fb - fb[-1]
    keep = excess > max(floor * max(1.0, abs(fb[0])), rel * excess.max())
    if np.count_nonzero(keep) < 3:
        return None
    slope = np.polyfit(s[keep], np.log(excess[keep]), 1)[0]
    return float(-slope)


# -- ensembles ------------------------------------------------------------------


@dataclass
class AttractorReport:
    fb_norm: float
    fb_norm_upper: float
    gronwall_radius: float
    absorbing_R0: float
    beta: float
    delta: float
    C_abs: float
    section_cloud: np.ndarray
    section_times: np.ndarray
    section_members: np.ndarray
    entry_times: list
    predicted_crossings: list
    seeds: list
    t_section: float
    cloud_H: np.ndarray = field(repr=False, default=None)
    cloud_V: np.ndarray = field(repr=False, default=None)
    checks: list = field(default_factory=list)
    fitted_delta: list = field(default_factory=list)

    @property
    def cloud_H_radius(self) -> float:
        return float(self.cloud_H.max()) if self.cloud_H.size else 0.0

    @property
    def cloud_V_radius(self) -> float:
        return float(self.cloud_V.max()) if self.cloud_V.size else 0.0

    def fraction_inside(self, tol: float = 1e-2) -> float:
        if not self.cloud_H.size:
            return 1.0
        return float(np.mean(self.cloud_H <= (1.0 + tol) * self.gronwall_radius))

    def to_dict(self) -> dict:
        return {
            "fb_norm": self.fb_norm, "fb_norm_upper": self.fb_norm_upper,
            "gronwall_radius": self.gronwall_radius,
            "absorbing": {"R0": self.absorbing_R0, "beta": self.beta, "delta": self.delta, "C": self.C_abs},
            "cloud": {"points": int(self.section_cloud.shape[0]), "H_radius": self.cloud_H_radius,
                      "V_radius": self.cloud_V_radius, "fraction_inside": self.fraction_inside()},
            "entry_times": self.entry_times, "predicted_crossings": self.predicted_crossings,
            "seeds": self.seeds, "t_section": self.t_section, "checks": self.checks,
            "fitted_delta": self.fitted_delta,
        }

    def section_rows(self):
        """Rows ``(member, t, |v|_H, |v|, a_0, ..., a_{N-1})`` for CSV export."""
        return np.column_stack([self.section_members, self.section_times, self.cloud_H, self.cloud_V,
                                self.section_cloud])


def _child_seeds(seeds, count: int) -> list[int]:
    if isinstance(seeds, (int, np.integer)):
        children = np.random.SeedSequence(int(seeds)).spawn(count)
        return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]
    seeds = [int(s) for s in seeds]
    if len(seeds) < count:
        raise ValueError(f"need {count} seeds, got {len(seeds)}")
    return seeds[:count]


def ensemble_sections(template: FlowParameters, seeds, t_section: float, count: int, basis, ops,
                      audit: ConstantsAudit, jn=None, n_points: int = 5, spacing: float = 1.0,
                      dh: float | None = None, workers: int | None = None, gronwall_tol: float = 1e-2
                      ) -> AttractorReport:
    """Run ``count`` trajectories from random initial data and sample late-time sections.

    Each member starts from ``random_H_ball`` data (the template's radius
    if it already uses one, else the Gronwall radius) with its own seed,
    spawned from ``seeds`` when an integer is given.  The cloud collects
    ``v(t_section + k * spacing)`` for ``k < n_points``.
    """
    child = _child_seeds(seeds, count)
    v0 = template.v0
    ball = dict(v0["random_H_ball"]) if isinstance(v0, dict) and "random_H_ball" in v0 else {"factor": 1.0}
    t_last = t_section + (n_points - 1) * spacing
    t_end = max(template.t_end, t_last)
    dt = template.dt
    idx = [int(round((t_section + k * spacing) / dt)) for k in range(n_points)]

    def member(seed):
        p = replace(template, v0={"random_H_ball": {**ball, "seed": seed}}, t_end=t_end, seed=seed)
        return run(p, basis, ops, audit, jn=jn, store_boundary=False)

    workers = workers or min(count, os.cpu_count() or 1)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trajs = list(pool.map(member, child))
    else:
        trajs = [member(s) for s in child]

    cloud, times, members, entries, crossings, checks, fits = [], [], [], [], [], [], []
    fb_lo, fb_hi = 0.0, 0.0
    for m, tr in enumerate(trajs):
        for i in idx:
            cloud.append(tr.a[i])
            times.append(tr.t[i])
            members.append(m)
        g = gronwall_check(tr, audit, gronwall_tol)
        entries.append(g.entry_time)
        crossings.append(g.predicted_crossing)
        fb = fb_norm(tr, dh)
        fb_lo, fb_hi = max(fb_lo, fb.value), max(fb_hi, fb.upper)
        ab = absorbing_check(tr, audit, dh)
        l41 = lemma41_check(tr, audit, dh)
        fits.append(fit_decay(ab.s, ab.fb_shifted))
        checks.append({"seed": child[m], "gronwall": g.to_dict(), "absorbing": ab.to_dict(),
                       "lemma41": l41.to_dict(), "fb_norm": fb.value, "flags": tr.flags})
    cloud = np.array(cloud).reshape(len(cloud), basis.size)
    cH = np.sqrt(np.maximum(np.einsum("ki,ij,kj->k", cloud, basis.mass_matrix, cloud), 0.0))
    cV = np.sqrt(np.maximum(np.einsum("ki,ij,kj->k", cloud, basis.stiffness_matrix, cloud), 0.0))
    c = audit.values
    return AttractorReport(fb_lo, fb_hi, audit.gronwall_radius, c["R0"], c["beta"], c["delta"], c["C_abs"],
                           cloud, np.array(times), np.array(members, dtype=float), entries, crossings, child,
                           float(t_section), cH, cV, checks, fits)
