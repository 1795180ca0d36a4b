"""Assemble every object a run needs from a resolved configuration."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .constants import ConstantsAudit, compute_constants, coupling_norm, ladyzhenskaya_constant
from .geometry import (ChannelGeometry, DivFreeBasis, QuadratureSpec, build_basis, build_channel,
                       poincare_lambda1, trace_norm)
from .io import OperatorCache, config_hash
from .operators import OperatorSet, assemble_operators, build_lift
from .potential import MollifiedPotential, PotentialCertificate, Superpotential, certify, from_spec, mollify
from .simulate import FlowParameters

__all__ = ["Problem", "build_problem", "flow_parameters", "seed_streams"]

log = logging.getLogger(__name__)

# independent random streams spawned from the single configured seed
STREAMS = ("initial", "ladyzhenskaya", "verification", "ensemble")


def seed_streams(seed: int) -> dict:
    """Child seeds for each named consumer, spawned from one ``SeedSequence``."""
    children = np.random.SeedSequence(int(seed)).spawn(len(STREAMS))
    return {name: int(c.generate_state(1, dtype=np.uint64)[0]) for name, c in zip(STREAMS, children)}


@dataclass
class Problem:
    config: RunConfig
    geometry: ChannelGeometry
    basis: DivFreeBasis
    ops: OperatorSet
    potential: Superpotential
    jn: MollifiedPotential
    certificate: PotentialCertificate
    audit: ConstantsAudit
    seeds: dict

    @property
    def hash(self) -> str:
        return config_hash(self.config.data)


def flow_parameters(cfg: RunConfig, seeds: dict | None = None, checkpoint_dir=None) -> FlowParameters:
    seeds = seeds or seed_streams(cfg["integration"]["seed"])
    it, ph, pot = cfg["integration"], cfg["physics"], cfg["potential"]
    v0 = it["v0"]
    if isinstance(v0, dict) and "random_H_ball" in v0 and "seed" not in v0["random_H_ball"]:
        v0 = {"random_H_ball": {**v0["random_H_ball"], "seed": seeds["initial"]}}
    if isinstance(v0, list):
        v0 = np.asarray(v0, dtype=float)
    return FlowParameters(
        nu=ph["nu"], s=ph["s"], lam=ph["lambda"], potential=cfg.potential_spec(), n_mollify=pot["n_mollify"],
        dt=it["dt"], t_end=it["t_end"], v0=v0, scheme=it["scheme"], convection=it["convection"],
        boundary=it["boundary"], seed=seeds["initial"], checkpoint_every=it["checkpoint_every"],
        checkpoint_dir=None if checkpoint_dir is None else str(checkpoint_dir),
        scan_range=(pot["scan"]["lo"], pot["scan"]["hi"]))


def build_problem(cfg: RunConfig) -> Problem:
    """Geometry, basis, operators, mollified potential, certificate and audit for ``cfg``."""
    g, b, ph, pot = cfg["geometry"], cfg["basis"], cfg["physics"], cfg["potential"]
    seeds = seed_streams(cfg["integration"]["seed"])
    q = g["quadrature"]
    geom = build_channel(g["L"], g["h"], QuadratureSpec(q["nx"], q["neta"], q["oversample"]))
    basis = build_basis(geom, b["K"], b["M"], rotate=b["rotate"])
    lift = build_lift(ph["s"], ph["lambda"], geom)
    cache_dir = cfg["output"]["cache_dir"]
    if cache_dir:
        ops = OperatorCache(cache_dir).get(basis, ph["nu"], lift, assemble_operators)
    else:
        ops = assemble_operators(basis, ph["nu"], lift)
    j = from_spec(cfg.potential_spec())
    jn = mollify(j, pot["n_mollify"])
    gamma = trace_norm(basis)
    scan = (pot["scan"]["lo"], pot["scan"]["hi"], pot["scan"]["points"])
    cert = certify(jn, scan, nu=ph["nu"], gamma_norm=gamma, margin=pot["margin"])
    CL, protocol = ladyzhenskaya_constant(basis, rng=seeds["ladyzhenskaya"])
    audit = compute_constants(ph["nu"], gamma, poincare_lambda1(basis), cert, ops.F_dual_norm, CL,
                              geom.boundary_measure, coupling_norm(ops.G_matrix, basis.stiffness_matrix),
                              ph["lambda"])
    audit.notes["ladyzhenskaya_protocol"] = protocol
    log.info("problem assembled: N=%d, |gamma|=%.4g, lambda1=%.4g", basis.size, gamma, audit.lambda1)
    return Problem(cfg, geom, basis, ops, j, jn, cert, audit, seeds)
