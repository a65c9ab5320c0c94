"""Elastic wave operators on Riemannian media, a leapfrog finite-difference
solver, and numerical checks of the Dirichlet-to-Neumann gauge freedoms."""

from .errors import *  # noqa: F401,F403
from .fields import SmoothField, SpacetimeField, constant_field
from .tensor_core import (MaterialTriple, check_positivity, check_symmetry,
                          euclidean_metric, isotropic_stiffness, voigt_pack,
                          voigt_unpack)

__version__ = "0.1.0"
