"""Superpotentials, Clarke intervals, mollification and certification."""
from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from shearflow.errors import DissipativityViolated
from shearflow.potential import (bump_constant, certify, clarke_hull, clarke_interval, constant_stability_scan,
                                 from_spec, gaussian_well, mollify, piecewise_polynomial, pressure_drop, quadratic)


def quad_mollified_deriv(j, n: int, r: float) -> float:
    """``int rho_n(t) j'(r - t) dt`` by adaptive quadrature, split at the kinks."""
    c = bump_constant()
    rho = lambda t: n * c * math.exp(-1.0 / (1.0 - (n * t) ** 2)) if abs(n * t) < 1 else 0.0  # noqa: E731
    pts = [r - b for b in j.breakpoints if abs(r - b) < 1.0 / n]
    val, _ = integrate.quad(lambda t: rho(t) * float(j.deriv(r - t)), -1.0 / n, 1.0 / n, points=pts or None,
                            epsabs=1e-14, epsrel=1e-13, limit=200)
    return val


@pytest.fixture(scope="module")
def pd():
    return pressure_drop()


def test_clarke_interval_pressure_drop_at_threshold(pd):
    # slope 2 s inside, 0.2 s outside: the jump at s = 1 is exactly [0.2, 2]
    assert clarke_interval(pd, 1.0) == (0.2, 2.0)
    assert clarke_interval(pd, -1.0) == (-2.0, -0.2)


def test_clarke_interval_smooth_point_is_degenerate(pd):
    lo, hi = clarke_interval(pd, 0.5)
    assert lo == hi == pytest.approx(1.0)
    lo, hi = clarke_interval(pd, 3.0)
    assert lo == hi == pytest.approx(0.6)


def test_clarke_hull_over_interval(pd):
    assert clarke_hull(pd, 0.5, 1.5) == pytest.approx((0.2, 2.0))
    assert clarke_hull(pd, 2.0, 3.0) == pytest.approx((0.4, 0.6))


def test_mollifier_mass_and_support():
    for n in (4, 32, 256):
        jn = mollify(pressure_drop(), n)
        assert jn.kernel_mass() == pytest.approx(1.0, abs=1e-10)
        assert jn.support == 1.0 / n
        t = np.array([-1.0 / n, 1.0 / n, 1.5 / n, -2.0 / n])
        assert np.all(jn.kernel(t) == 0.0)
        assert jn.kernel(np.array([0.0]))[0] > 0


@pytest.mark.parametrize("r", [-1.02, -0.99, 0.0, 0.3, 0.98, 1.0, 1.01, 1.04, 7.5])
def test_mollified_derivative_matches_quadrature(pd, r):
    jn = mollify(pd, 32)
    assert jn.deriv(r) == pytest.approx(quad_mollified_deriv(pd, 32, r), abs=1e-11)
    assert jn.deriv_reference(r) == pytest.approx(quad_mollified_deriv(pd, 32, r), abs=1e-11)


def test_mollified_derivative_nonpolynomial_matches_quadrature():
    j = gaussian_well(2.0)
    jn = mollify(j, 8)
    for r in (-0.7, 0.0, 0.4, 2.2):
        assert jn.deriv(r) == pytest.approx(quad_mollified_deriv(j, 8, r), abs=1e-11)


def test_mollified_derivative_is_odd_and_zero_at_origin(pd):
    jn = mollify(pd, 32)
    assert jn.deriv(0.0) == 0.0
    r = np.linspace(0.01, 3.0, 97)
    np.testing.assert_allclose(jn.deriv(-r), -jn.deriv(r), atol=1e-14)


@settings(max_examples=200, deadline=None)
@given(st.floats(-5.0, 5.0, allow_nan=False), st.sampled_from([4, 16, 32, 128]))
def test_selection_lies_in_local_hull(r, n):
    j = pressure_drop()
    jn = mollify(j, n)
    lo, hi = clarke_hull(j, r - 1.0 / n, r + 1.0 / n)
    xi = jn.deriv(r)
    assert lo - 1e-10 <= xi <= hi + 1e-10


@settings(max_examples=100, deadline=None)
@given(st.floats(-5.0, 5.0, allow_nan=False))
def test_selection_away_from_kinks_is_close_to_gradient(r):
    j = pressure_drop()
    n = 64
    if min(abs(r - b) for b in j.breakpoints) <= 1.0 / n:
        return
    # j' is linear on each piece and the kernel is even, so j_n' = j' exactly there
    assert mollify(j, n).deriv(r) == pytest.approx(float(j.deriv(r)), abs=1e-12)


def test_certificate_pressure_drop(pd):
    gamma = 0.3828954699855077
    cert = certify(mollify(pd, 32), nu=1.0, gamma_norm=gamma)
    assert cert.d2 < 0.9 / gamma**2
    assert cert.c2 == pytest.approx(0.2, rel=1e-3)
    # a kink of height 2 - 0.2 at |s| = 1 must be absorbed by c1
    assert 1.7 < cert.c1 < 1.9
    assert cert.admits()
    assert not cert.admits(c1=0.9 * cert.c1)
    assert not cert.admits(c2=0.5 * cert.c2)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-20, 20), min_size=8, max_size=64), st.floats(0.0, 2.0))
def test_growth_bound_on_sampled_boundary_functions(values, extra):
    """``|xi|^2_{L2} <= 2 c1^2 |Gamma| + 2 c2^2 |u|^2_{L2}`` for ``xi = j_n'(u)``."""
    jn = mollify(pressure_drop(), 32)
    cert = certify(jn, (-50, 50, 4001))
    u = np.asarray(values) * (1 + extra)
    w = np.full(u.size, 2 * math.pi / u.size)
    xi = jn.deriv(u)
    lhs = np.sum(w * xi * xi)
    rhs = 2 * cert.c1**2 * w.sum() + 2 * cert.c2**2 * np.sum(w * u * u)
    assert lhs <= rhs * (1 + 1e-12)


def test_dissipativity_failure_is_reported():
    # j' = -s is anti-dissipative: d2 = 1 exceeds any limit below 1
    j = quadratic(-0.5)
    with pytest.raises(DissipativityViolated):
        certify(j, (-10, 10, 201), nu=1.0, gamma_norm=1.5)


def test_stability_scan_settles(pd):
    scan = constant_stability_scan(pd, [4, 8, 16, 32, 64], (-50, 50, 4001), nu=1.0,
                                   gamma_norm=0.38289546998550683)
    assert scan.N0 is not None and scan.N0 <= 16
    assert scan.drift_from(16) < 0.1
    assert all(c.d2 < 0.9 * c.d2_limit for _, c in scan.rows)


def test_potential_specs_roundtrip():
    j = from_spec({"name": "pressure_drop", "threshold": 2.0, "inner": 1.0, "outer": 0.5})
    assert j.breakpoints == (-2.0, 2.0)
    assert clarke_interval(j, 2.0) == (2.0, 4.0)
    pw = piecewise_polynomial([0.0], [[0.0, -1.0], [0.0, 1.0]])
    assert clarke_interval(pw, 0.0) == (-1.0, 1.0)
    assert from_spec("quadratic").deriv(3.0) == pytest.approx(3.0)


def test_mollify_rejects_bad_index(pd):
    with pytest.raises(ValueError):
        mollify(pd, 0)
