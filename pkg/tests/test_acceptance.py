"""The twelve acceptance criteria on the canonical configuration, at their stated tolerances.

Every test records one line through the ``criterion`` fixture; the lines are
printed together in the pytest terminal summary (and immediately with ``-s``).
"""
from __future__ import annotations


import numpy as np
import pytest

from shearflow.attractor import ensemble_sections, gronwall_check, lemma41_check
from shearflow.cli import main
from shearflow.operators import assemble_operators, build_lift, lift_bound_radius, lift_bound_violations
from shearflow.potential import clarke_interval, constant_stability_scan, pressure_drop
from shearflow.problem import flow_parameters
from shearflow.simulate import FlowParameters, Stepper, energy_monitor, reference_integrate, run

from conftest import CONFIGS

pytestmark = pytest.mark.acceptance


def test_01_operator_identities(canonical, criterion):
    basis, ops = canonical.basis, canonical.ops
    rng = np.random.default_rng(1)
    worst_A = worst_B = 0.0
    for _ in range(100):
        u, v = rng.standard_normal(ops.size), rng.standard_normal(ops.size)
        nv2 = basis.norm_V(v) ** 2
        worst_A = max(worst_A, abs(v @ ops.A_matrix @ v - ops.nu * nv2) / (ops.nu * nv2))
        worst_B = max(worst_B, abs(ops.B_form(u, v, v)) / (basis.norm_V(u) * nv2))
    ok = worst_A < 1e-10 and worst_B < 1e-8
    criterion(1, ok, f"A identity {worst_A:.2e} (< 1e-10), B(u,v,v) {worst_B:.2e} (< 1e-8)")
    assert ok


def test_02_rot_grad_identity(canonical, criterion):
    basis = canonical.basis
    f, w = basis.quadrature_fields, basis.grid.w
    rr = (f.omega * w[:, None]).T @ f.omega
    res = float(np.abs(rr - basis.stiffness_matrix).max())
    criterion(2, res < 1e-10, f"max pair residual {res:.2e} (< 1e-10)")
    assert res < 1e-10


def test_03_lift_bound(canonical, criterion):
    parts, ok = [], True
    for lam in (0.05, 0.2):
        ops = canonical.ops if lam == canonical.ops.lift.lam else assemble_operators(
            canonical.basis, 1.0, build_lift(1.0, lam, canonical.geometry))
        radius = lift_bound_radius(ops)
        viol = lift_bound_violations(ops, 1000, np.random.default_rng(3), lam)
        ok &= radius <= lam and viol == 0
        parts.append(f"lambda={lam}: radius {radius:.4f}, {viol} violations")
    criterion(3, ok, "; ".join(parts))
    assert ok


def test_04_mollification_stability(canonical, criterion):
    ns = [4, 8, 16, 32, 64, 128, 256]
    st = constant_stability_scan(pressure_drop(), ns, (-50.0, 50.0, 20001), 1.0, canonical.audit.gamma_norm,
                                 0.1, margin=0.9)
    drift16 = st.drift_from(16)
    d2_ok = all(c.d2 < 0.9 * c.d2_limit for _, c in st.rows)
    ok = drift16 < 0.1 and d2_ok
    criterion(4, ok, f"drift for n >= 16: {drift16:.3%} (< 10%), N0 = {st.N0}, d2 margin held: {d2_ok}")
    assert ok


def test_05_clarke_interval(criterion):
    lo, hi = clarke_interval(pressure_drop(), 1.0)
    ok = (lo, hi) == (0.2, 2.0)
    criterion(5, ok, f"[{lo!r}, {hi!r}] == [0.2, 2.0]")
    assert ok


def test_06_energy_inequality(canonical, canonical_traj, criterion):
    rep = energy_monitor(canonical_traj, canonical.audit, c_tol=10.0)
    ok = rep.violations == 0 and rep.slack.size == 10_000
    criterion(6, ok, f"{rep.slack.size} steps, {rep.violations} violations, max slack - tol {rep.max_excess:.3g}")
    assert ok


def test_07_gronwall_envelope(canonical, canonical_traj, criterion):
    g = gronwall_check(canonical_traj, canonical.audit)
    r0 = canonical.basis.norm_H(canonical_traj.a[0])
    start_ok = r0 == pytest.approx(10 * canonical.audit.gronwall_radius, rel=1e-12)
    rel = abs(g.entry_time - g.predicted_crossing) / g.predicted_crossing
    ok = start_ok and g.holds and rel <= 0.25
    criterion(7, ok, f"envelope violations {g.violations}, entry {g.entry_time:.3f} vs predicted crossing "
                     f"{g.predicted_crossing:.3f} (rel {rel:.0%}, need <= 25%)")
    assert start_ok and g.holds, "the envelope itself must hold"
    assert rel <= 0.25, ("the audited envelope rate is several times slower than the measured decay, so the "
                         "predicted crossing overestimates the entry time; see the decisions ledger")


def test_08_window_estimates(canonical, canonical_traj, criterion):
    rep = lemma41_check(canonical_traj, canonical.audit)
    d = rep.to_dict()
    ok = rep.violations == 0
    criterion(8, ok, f"{d['windows']} windows, {rep.violations} violations, max ratios "
                     f"{d['max_ratio_energy']:.3g} / {d['max_ratio_derivative']:.3g}")
    assert ok


def test_09_absorbing_surrogate(canonical, criterion):
    cfg = canonical.config
    params = flow_parameters(cfg, canonical.seeds)
    rep = ensemble_sections(params, cfg["integration"]["seed"], cfg["attractor"]["t_section"], 8, canonical.basis,
                            canonical.ops, canonical.audit, jn=canonical.jn, n_points=1)
    late = [c["absorbing"]["absorbed_violations"] for c in rep.checks]
    ok = len(late) == 8 and sum(late) == 0
    s0 = max(c["absorbing"]["s0"] for c in rep.checks)
    criterion(9, ok, f"8 trajectories, {sum(late)} grid shifts s >= s0 (max s0 {s0:.3f}) above 2 R0")
    assert ok


def test_10_small_n_oracle(tiny, criterion):
    ops, jn = tiny.ops, tiny.jn
    assert ops.size == 3
    a0 = np.array([1.5, -1.0, 0.8])
    _, ref = reference_integrate(ops, jn, a0, 1.0, 1e-6, sample_every=100)
    errs = {}
    for scheme in ("etd1", "imex_euler"):
        st = Stepper(ops, jn, 1e-4, scheme)
        a, worst = a0.copy(), 0.0
        for k in range(1, 10_001):
            a = st.advance(a)
            worst = max(worst, float(np.abs(a - ref[k]).max()))
        errs[scheme] = worst
    ok = errs["etd1"] < 1e-4
    criterion(10, ok, f"production etd1 max error {errs['etd1']:.2e} (< 1e-4); "
                      f"imex_euler {errs['imex_euler']:.2e} for reference")
    assert ok


def test_11_stokes_decay(canonical, criterion):
    basis = canonical.basis
    ops0 = assemble_operators(basis, 1.0, build_lift(0.0, 0.2, canonical.geometry))
    p = FlowParameters(1.0, 0.0, 0.2, "pressure_drop", 32, 1e-3, 0.1, v0=np.ones(basis.size),
                       convection=False, boundary=False)
    tr = run(p, basis, ops0)
    assert tr.n_samples == 101
    exact = np.exp(-ops0.nu * basis.stokes_eigenvalues * tr.t[-1])
    rel = float(np.max(np.abs(tr.a[-1] - exact) / exact))
    criterion(11, rel < 1e-4, f"all {basis.size} eigenmodes after 100 steps: max relative error {rel:.2e}")
    assert rel < 1e-4


def test_12_reproducibility(tmp_path, criterion):
    cfg = str(CONFIGS / "canonical.yaml")
    outs = []
    for name in ("a", "b"):
        d = tmp_path / name
        assert main(["simulate", "--config", cfg, "--out", str(d), "--no-timestamp", "--seed", "77"]) == 0
        outs.append((d / "trajectory.csv").read_bytes())
    ok = outs[0] == outs[1] and len(outs[0]) > 0
    criterion(12, ok, f"two seeded runs, trajectory.csv identical: {ok} ({len(outs[0])} bytes)")
    assert ok
