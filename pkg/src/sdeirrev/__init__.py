"""Entropy production of discretized reversible SDEs.

Simulate overdamped and underdamped Langevin dynamics with the EM, Milstein
and BBK schemes, accumulate the Gallavotti-Cohen action functional along the
chain, and estimate the entropy production rate EP(dt) of each scheme.
"""

from .estimate import EpEstimate, batch_means, merge_chains, run_chain
from .gc import gc_increment
from .kernels import BACKEND
from .model import (ContractError, DiffusionModel, Domain, LangevinSpec, ModelSpec, PotentialModel,
                    SingularDiffusionError, validate_derivatives)
from .oracle import ep_constant_multiplicative, ep_langevin_theory, gaussian_moment, gibbs_expectation

__all__ = [
    "BACKEND", "ContractError", "DiffusionModel", "Domain", "EpEstimate", "LangevinSpec", "ModelSpec",
    "PotentialModel", "SingularDiffusionError", "batch_means", "ep_constant_multiplicative",
    "ep_langevin_theory", "gaussian_moment", "gc_increment", "gibbs_expectation", "merge_chains",
    "run_chain", "validate_derivatives",
]
