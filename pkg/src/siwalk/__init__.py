"""Exact lace-style expansion engine for self-interacting lattice walks.

Computes expansion coefficients of the endpoint-law recurrence by two
independent routes, assembles drift and covariance series from them,
verifies the exact finite-step identities, decomposes the Fourier ratio
for inductive arguments, and cross-checks everything against Monte Carlo
sampling.
"""

__version__ = "0.1.0"

from .lattice import SignedField
from .models import (BaseWalk, ExcitedWalk, PartialEnvironmentWalk,
                     PathHistory, ReinforcedWalk, load_model)

__all__ = [
    "SignedField",
    "BaseWalk",
    "ExcitedWalk",
    "ReinforcedWalk",
    "PartialEnvironmentWalk",
    "PathHistory",
    "load_model",
    "__version__",
]
