"""Spectral-Galerkin simulation of channel shear flow with a nonmonotone wall law.

The package is organised bottom-up: :mod:`~shearflow.geometry` builds the
channel and the divergence-free basis, :mod:`~shearflow.potential` the
superpotential and its mollification, :mod:`~shearflow.operators` the
Galerkin operators, :mod:`~shearflow.simulate` the time integrator with its
monitors, :mod:`~shearflow.attractor` the long-time diagnostics, and
:mod:`~shearflow.cli` the batch front end.
"""
from .attractor import (AttractorReport, WindowNorms, absorbing_check, ensemble_sections, fb_norm,
                        gronwall_check, lemma41_check, shift, window_norms)
from .config import RunConfig, parse_config
from .constants import ConstantsAudit, compute_constants
from .geometry import (ChannelGeometry, DivFreeBasis, build_basis, build_channel, poincare_lambda1,
                       trace_norm)
from .kernels import BACKEND
from .operators import LiftField, OperatorSet, assemble_operators, build_lift
from .potential import (MollifiedPotential, PotentialCertificate, Superpotential, certify, clarke_interval,
                        constant_stability_scan, mollify, pressure_drop)
from .problem import Problem, build_problem
from .simulate import (FlowParameters, GalerkinState, Trajectory, energy_monitor, run, step,
                       vprime_monitor)

__version__ = "0.1.0"

__all__ = [
    "AttractorReport", "WindowNorms", "absorbing_check", "ensemble_sections", "fb_norm", "gronwall_check",
    "lemma41_check", "shift", "window_norms", "RunConfig", "parse_config", "ConstantsAudit",
    "compute_constants", "ChannelGeometry", "DivFreeBasis", "build_basis", "build_channel",
    "poincare_lambda1", "trace_norm", "BACKEND", "LiftField", "OperatorSet", "assemble_operators",
    "build_lift", "MollifiedPotential", "PotentialCertificate", "Superpotential", "certify",
    "clarke_interval", "constant_stability_scan", "mollify", "pressure_drop", "Problem", "build_problem",
    "FlowParameters", "GalerkinState", "Trajectory", "energy_monitor", "run", "step", "vprime_monitor",
    "__version__",
]
