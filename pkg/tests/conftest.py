"""Shared fixtures.

The canonical problem and its trajectory are built once per session; most
module tests use the smaller problems below so they stay fast.
"""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import pytest

from shearflow.config import parse_config
from shearflow.constants import compute_constants, coupling_norm, ladyzhenskaya_constant
from shearflow.geometry import build_basis, build_channel, poincare_lambda1, trace_norm
from shearflow.operators import assemble_operators, build_lift
from shearflow.potential import certify, mollify, pressure_drop
from shearflow.problem import build_problem, flow_parameters
from shearflow.simulate import run

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


@pytest.fixture(scope="session")
def canonical_config():
    return parse_config(CONFIGS / "canonical.yaml")


@pytest.fixture(scope="session")
def canonical(canonical_config):
    return build_problem(canonical_config)


@pytest.fixture(scope="session")
def canonical_traj(canonical):
    params = flow_parameters(canonical.config, canonical.seeds)
    return run(params, canonical.basis, canonical.ops, canonical.audit, jn=canonical.jn)


class Small:
    """A K=1, M=2 problem (N=6) with a full constants audit."""

    def __init__(self, K=1, M=2, s=1.0, lam=0.2, nu=1.0, n=32):
        self.geom = build_channel(2 * math.pi, 1.0)
        self.basis = build_basis(self.geom, K, M)
        self.lift = build_lift(s, lam, self.geom)
        self.ops = assemble_operators(self.basis, nu, self.lift)
        self.j = pressure_drop()
        self.jn = mollify(self.j, n)
        self.nu = nu
        gamma = trace_norm(self.basis)
        self.cert = certify(self.jn, (-50.0, 50.0, 4001), nu=nu, gamma_norm=gamma)
        CL, _ = ladyzhenskaya_constant(self.basis, samples=60, refine=1, rng=0)
        self.audit = compute_constants(nu, gamma, poincare_lambda1(self.basis), self.cert, self.ops.F_dual_norm,
                                       CL, self.geom.boundary_measure,
                                       coupling_norm(self.ops.G_matrix, self.basis.stiffness_matrix), lam)


@pytest.fixture(scope="session")
def small():
    return Small()


@pytest.fixture(scope="session")
def tiny():
    """K=1, M=1: the three-mode system of the small-N oracle."""
    return Small(K=1, M=1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)



ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record ``criterion(number, passed, detail)`` for the acceptance summary."""

    def record(number: int, passed: bool, detail: str) -> None:
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE[number] = line
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
