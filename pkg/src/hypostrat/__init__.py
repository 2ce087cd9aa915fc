"""Hypocoercive energy method for stratified Couette flow in 2D Boussinesq."""

from .params import (AdmissibilityError, DomainError, HypoConstants, PhysParams,
                     check_smallness, compute_mu, default_constants, repaired_constants,
                     validate_diffusion)

__all__ = [
    "AdmissibilityError", "DomainError", "HypoConstants", "PhysParams",
    "check_smallness", "compute_mu", "default_constants", "repaired_constants",
    "validate_diffusion",
]
__version__ = "0.1.0"
