"""Galerkin operators: identities, lift bound and the compiled/numpy kernels."""
from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import integrate

from shearflow import kernels
from shearflow.errors import GeometryMismatch
from shearflow.geometry import build_basis, build_channel
from shearflow.operators import (assemble_operators, boundary_identity_check, build_lift, dual_norm,
                                 lift_bound_radius, lift_bound_violations)


@pytest.fixture(scope="module")
def geom():
    return build_channel(2 * math.pi, 1.0)


@pytest.fixture(scope="module")
def ops(geom):
    return assemble_operators(build_basis(geom, 2, 4), 0.7, build_lift(1.0, 0.2, geom))


@pytest.fixture(scope="module")
def raw_ops(geom):
    return assemble_operators(build_basis(geom, 2, 4, rotate=False), 1.0, build_lift(1.0, 0.2, geom))


def test_convection_tensor_antisymmetry(ops):
    T = ops.B_tensor
    assert np.abs(T + T.transpose(0, 2, 1)).max() < 1e-12 * max(1.0, np.abs(T).max())


def test_contract_matches_quadrature_form(ops, rng):
    for _ in range(5):
        a = rng.standard_normal(ops.size)
        np.testing.assert_allclose(ops.B_apply(a), ops.B_apply_quadrature(a), atol=1e-10 * np.abs(ops.B_apply(a)).max())
        z = rng.standard_normal(ops.size)
        assert ops.B_apply(a) @ z == pytest.approx(ops.B_form(a, a, z), rel=1e-10, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, 18, elements=st.floats(-3, 3)), arrays(np.float64, 18, elements=st.floats(-3, 3)))
def test_B_vanishes_on_diagonal(u, v):
    geom = build_channel(2 * math.pi, 1.0)
    ops = _hyp_ops(geom)
    nu, nv = ops.basis.norm_V(u), ops.basis.norm_V(v)
    assert abs(ops.B_form(u, v, v)) <= 1e-8 * max(nu * nv * nv, 1e-300) + 1e-300


_CACHE = {}


def _hyp_ops(geom):
    if "ops" not in _CACHE:
        _CACHE["ops"] = assemble_operators(build_basis(geom, 1, 6), 1.0, build_lift(1.0, 0.2, geom))
    return _CACHE["ops"]


def test_A_is_nu_times_stiffness(ops, rng):
    for _ in range(100):
        v = rng.standard_normal(ops.size)
        nv2 = ops.basis.norm_V(v) ** 2
        assert abs(v @ ops.A_matrix @ v - ops.nu * nv2) / (ops.nu * nv2) < 1e-10


def test_dual_norm_of_A(ops, rng):
    for _ in range(100):
        a = rng.standard_normal(ops.size)
        assert dual_norm(ops.A_matrix @ a, ops.basis) / ops.basis.norm_V(a) == pytest.approx(ops.nu, rel=1e-10)


def test_integration_by_parts_forms(ops):
    rep = boundary_identity_check(ops, samples=10, rng=3)
    assert rep.interior_residual < 1e-10
    assert rep.boundary_residual < 1e-10


@pytest.mark.parametrize("lam", [0.05, 0.2])
def test_lift_bound(geom, lam):
    ops = assemble_operators(build_basis(geom, 4, 6), 1.0, build_lift(1.0, lam, geom))
    assert lift_bound_radius(ops) <= lam
    assert lift_bound_violations(ops, 1000, rng=7, lam=lam) == 0


def test_lift_bound_radius_is_sharp(ops):
    # the radius is attained: a slightly smaller constant must fail somewhere
    r = lift_bound_radius(ops)
    assert r > 0
    S = 0.5 * (ops.G1 + ops.G1.T)
    from scipy import linalg

    vals, vecs = linalg.eigh(S, ops.basis.stiffness_matrix)
    i = int(np.argmax(np.abs(vals)))
    v = vecs[:, i]
    assert abs(v @ ops.G1 @ v) == pytest.approx(r * ops.basis.norm_V(v) ** 2, rel=1e-10)


def test_lift_shape(geom):
    lift = build_lift(2.0, 0.2, geom)
    assert lift.t0 == pytest.approx(0.05)
    assert lift.w1(np.array([0.0]))[0] == pytest.approx(2.0)
    assert lift.w1(np.array([0.05, 0.5]))[0] == 0.0
    zero = build_lift(0.0, 0.2, geom)
    assert zero.is_zero and zero.t0 == 1.0


def test_lift_rot_grad_identity(geom):
    # for the shear lift both sides reduce to L * int (w1')^2; check by direct quadrature
    lift = build_lift(1.0, 0.2, geom)
    top = lift.support_height
    rot = integrate.quad(lambda y: float(lift.omega(np.array([y]))[0]) ** 2, 0, top, epsabs=1e-13, limit=200)[0]
    grad = integrate.quad(lambda y: float(lift.dw1_dx2(np.array([y]))[0]) ** 2, 0, top, epsabs=1e-13,
                          limit=200)[0]
    assert rot == pytest.approx(grad, rel=1e-12)


def test_forcing_lives_on_the_mean_modes(raw_ops):
    b = raw_ops.basis
    mean = np.array([k == 0 for k, _ in b.fourier for _ in range(b.M)])
    assert np.abs(raw_ops.F_vector[~mean]).max() < 1e-12
    assert np.abs(raw_ops.F_vector[mean]).max() > 1e-3


def test_forcing_matches_one_dimensional_quadrature(raw_ops):
    """``<F, v_m> = nu L int w1'(y) phi_m''(y) dy`` for the mean modes (``v = (phi', 0)``)."""
    b, lift, L = raw_ops.basis, raw_ops.lift, b_L(raw_ops)
    top = lift.support_height
    for m in range(b.M):
        def integrand(y, m=m):
            _, _, fpp = b.profiles.evaluate(np.array([y]))
            return float(lift.dw1_dx2(np.array([y]))[0] * fpp[0, m])
        val = raw_ops.nu * L * integrate.quad(integrand, 0, top, epsabs=1e-13, limit=200)[0]
        assert raw_ops.F_vector[m] == pytest.approx(val, rel=1e-8, abs=1e-11)


def b_L(ops):
    return ops.basis.geometry.L


def test_dense_and_matrix_free_paths_agree(geom, rng):
    basis = build_basis(geom, 1, 3)
    lift = build_lift(1.0, 0.2, geom)
    dense = assemble_operators(basis, 1.0, lift)
    free = assemble_operators(basis, 1.0, lift, dense_limit=0)
    assert free.B_tensor is None
    a = rng.standard_normal(basis.size)
    np.testing.assert_allclose(dense.B_apply(a), free.B_apply(a), atol=1e-11)


def test_backends_agree(ops, rng):
    if kernels.BACKEND != "compiled":
        pytest.skip("compiled kernels not built")
    c, p = kernels.backend_module("compiled"), kernels.backend_module("python")
    f, w = ops.basis.quadrature_fields, ops.grid.w
    args = [np.ascontiguousarray(x) for x in (w[:, None] * f.omega, f.v1, f.v2)]
    Tc, Tp = c.trilinear_assemble(*args), p.trilinear_assemble(*args)
    np.testing.assert_allclose(Tc, Tp, atol=1e-12 * np.abs(Tp).max())
    a = rng.standard_normal(ops.size)
    np.testing.assert_allclose(c.trilinear_contract(Tc, a), p.trilinear_contract(Tp, a), atol=1e-10)


def test_geometry_mismatch_is_rejected(geom):
    other = build_channel(2 * math.pi, 2.0)
    with pytest.raises(GeometryMismatch):
        assemble_operators(build_basis(geom, 1, 2), 1.0, build_lift(1.0, 0.2, other))
