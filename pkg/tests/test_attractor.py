"""Shift semigroup, window norms and the long-time checks."""
from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shearflow.attractor import (absorbing_check, ensemble_sections, fb_norm, fit_decay, gronwall_check,
                                 lemma41_check, shift, window_norms, window_table)
from shearflow.errors import HorizonTooShort, ShiftBeyondHorizon, WindowBeyondHorizon
from shearflow.operators import assemble_operators, build_lift
from shearflow.simulate import FlowParameters, Trajectory, run


def synthetic(norm_H, norm_V, vprime, dt):
    n = len(norm_H)
    a = np.arange(n, dtype=float)[:, None] * np.ones((1, 2))
    return Trajectory(np.arange(n) * dt, a, np.asarray(norm_H, float), np.asarray(norm_V, float),
                      np.asarray(vprime, float), np.asarray(vprime, float))


def constant(c, d, e, horizon=3.0, dt=0.01):
    n = int(round(horizon / dt)) + 1
    return synthetic(np.full(n, c), np.full(n, d), np.full(n, e), dt)


def test_shift_identity_and_composition():
    tr = synthetic(np.linspace(0, 1, 301), np.linspace(1, 2, 301), np.ones(301), 0.01)
    s0 = shift(tr, 0.0)
    assert np.array_equal(s0.a, tr.a) and np.array_equal(s0.t, tr.t)
    ab = shift(shift(tr, 0.37), 1.1)
    direct = shift(tr, 1.47)
    assert np.array_equal(ab.a, direct.a) and np.array_equal(ab.t, direct.t)
    assert ab.metadata["shift_steps"] == 147
    assert ab.t[0] == 0.0


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 150), st.integers(0, 150))
def test_shift_composition_on_grid(i, j):
    tr = synthetic(np.arange(301.0), np.arange(301.0), np.arange(301.0), 0.01)
    a, b = i * 0.01, j * 0.01
    assert np.array_equal(shift(shift(tr, a), b).a, shift(tr, a + b).a)


def test_shift_records_offgrid_offset():
    tr = constant(1, 1, 1)
    out = shift(tr, 0.0149)
    assert out.metadata["shift_steps"] == 1
    assert out.metadata["shift_offset"] == pytest.approx(0.0049)


def test_horizon_errors():
    tr = constant(1, 1, 1, horizon=1.5)
    with pytest.raises(ShiftBeyondHorizon):
        shift(tr, 2.0)
    with pytest.raises(WindowBeyondHorizon):
        window_norms(tr, 0.8)
    with pytest.raises(HorizonTooShort):
        fb_norm(constant(1, 1, 1, horizon=0.5))


def test_zero_trajectory_has_zero_norms():
    fb = fb_norm(constant(0.0, 0.0, 0.0))
    assert fb.value == 0.0 and fb.upper == 0.0


def test_constant_trajectory_window_norms():
    # l2V = d, linfH = c, l43dual = (int e^{4/3})^{3/4} = e on every unit window
    c, d, e = 2.0, 3.0, 5.0
    w = window_norms(constant(c, d, e), 0.5)
    assert (w.l2V, w.linfH, w.l43dual) == pytest.approx((d, c, e), rel=1e-12)
    assert fb_norm(constant(c, d, e)).value == pytest.approx(c + d + e, rel=1e-12)


def test_linear_profile_window_norms():
    # |v(t)| = t: int_h^{h+1} t^2 dt = ((h+1)^3 - h^3)/3; trapezoid error is dt^2/6 per unit window
    dt = 1e-3
    t = np.arange(0, 3.0 + dt / 2, dt)
    tr = synthetic(t, t, t, dt)
    for h in (0.0, 0.7, 1.9):
        w = window_norms(tr, h)
        exact = math.sqrt(((h + 1) ** 3 - h**3) / 3)
        assert w.l2V == pytest.approx(exact, abs=dt**2)
        assert w.linfH == pytest.approx(h + 1)
        l43 = (3 / 7 * ((h + 1) ** (7 / 3) - h ** (7 / 3))) ** 0.75
        assert w.l43dual == pytest.approx(l43, rel=1e-5)


def test_subgrid_refinement_is_monotone(small):
    p = FlowParameters(1.0, 1.0, 0.2, "pressure_drop", 32, 1e-3, 4.0,
                       v0={"random_H_ball": {"factor": 5.0, "seed": 9}})
    tr = run(p, small.basis, small.ops, small.audit, jn=small.jn)
    coarse = fb_norm(tr, 0.1)
    fine = fb_norm(tr, 0.02)
    finest = fb_norm(tr, 0.001)
    assert coarse.value <= fine.value <= finest.value
    assert finest.value <= coarse.upper * (1 + 1e-12)


def test_lions_magenes_surrogate(small):
    p = FlowParameters(1.0, 1.0, 0.2, "pressure_drop", 32, 1e-3, 3.0,
                       v0={"random_H_ball": {"factor": 3.0, "seed": 4}})
    tr = run(p, small.basis, small.ops, small.audit, jn=small.jn)
    tab = window_table(tr, 0.05)
    w = int(round(1.0 / tr.dt))
    for h, linf in zip(tab.h, tab.linfH):
        k = int(round(h / tr.dt))
        assert np.all(tr.norm_H[k:k + w + 1] <= linf)


@pytest.fixture(scope="module")
def small_run(small):
    p = FlowParameters(1.0, 1.0, 0.2, "pressure_drop", 32, 1e-3, 5.0,
                       v0={"random_H_ball": {"factor": 10.0, "seed": 11}})
    return run(p, small.basis, small.ops, small.audit, jn=small.jn)


def test_absorbing_suffix_max_matches_brute_force(small_run, small):
    rep = absorbing_check(small_run, small.audit, dh=0.01)
    for i in (0, 50, 170, 300):
        s = rep.s[i]
        brute = fb_norm(shift(small_run, s), 0.01).value
        assert rep.fb_shifted[i] == pytest.approx(brute, rel=1e-10)


def test_long_time_checks_hold_on_small_problem(small_run, small):
    g = gronwall_check(small_run, small.audit)
    assert g.holds and g.entry_time <= g.envelope_time
    assert lemma41_check(small_run, small.audit).violations == 0
    ab = absorbing_check(small_run, small.audit)
    assert ab.violations == 0 and ab.absorbed_violations == 0


def test_gronwall_detects_an_injected_excursion(small_run, small):
    tr = shift(small_run, 0.0)
    tr.norm_H = tr.norm_H.copy()
    tr.norm_H[3000] = 10 * small.audit.gronwall_radius
    g = gronwall_check(tr, small.audit)
    assert g.violations == 1
    assert g.entry_time == pytest.approx(tr.t[3001])


def test_fit_decay_recovers_rate():
    s = np.linspace(0, 15, 600)
    assert fit_decay(s, 3.0 + 2.0 * np.exp(-1.7 * s)) == pytest.approx(1.7, rel=1e-3)
    assert fit_decay(s, np.ones_like(s)) is None


def test_linear_stokes_cloud_collapses(small):
    """Without forcing, convection or wall law every member decays like exp(-nu lambda1 t)."""
    geom = small.geom
    ops0 = assemble_operators(small.basis, 1.0, build_lift(0.0, 0.2, geom))
    lam1 = small.audit.lambda1
    t_section = 20.0 / lam1
    p = FlowParameters(1.0, 0.0, 0.2, "pressure_drop", 32, 1e-3, t_section + 1.0,
                       v0={"random_H_ball": {"factor": 1.0}}, convection=False, boundary=False)
    rep = ensemble_sections(p, 3, t_section, 4, small.basis, ops0, small.audit, n_points=2, spacing=0.5,
                            workers=2)
    assert rep.cloud_H_radius < 1e-6
    assert rep.fraction_inside() == 1.0
    assert rep.section_cloud.shape == (8, small.basis.size)


def test_ensemble_is_reproducible_and_thread_independent(small):
    p = FlowParameters(1.0, 1.0, 0.2, "pressure_drop", 32, 1e-3, 1.5,
                       v0={"random_H_ball": {"factor": 2.0}})
    a = ensemble_sections(p, 21, 1.0, 3, small.basis, small.ops, small.audit, jn=small.jn, n_points=1, workers=1)
    b = ensemble_sections(p, 21, 1.0, 3, small.basis, small.ops, small.audit, jn=small.jn, n_points=1, workers=3)
    assert np.array_equal(a.section_cloud, b.section_cloud)
    assert a.seeds == b.seeds
