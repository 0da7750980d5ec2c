"""hopflab: a numerical laboratory for boundary point estimates of divergence-form operators.

Submodules
----------
modulus      moduli of continuity, the regularisation ``sigma_hat`` and Dini integrals
geometry     paraboloid boundaries, flattening, Euclidean and parabolic distances
drift        drift descriptors and the drift-admissibility functionals
pde          finite-volume annulus / cylinder solvers and discrete Green functions
experiments  perturbation chain, Hopf-constant scans and the ``T1`` operator norm
cli          the ``hopflab`` command-line front end
"""
__version__ = "0.1.0"

from .errors import (ConvergenceError, DivergenceError, DomainError, GeometryError, HopfLabError,
                     InvariantViolation, UnsupportedFamilyError)
from .modulus import (Linear, LogPower, Power, Scaled, dini_integral, eval_modulus, is_dini,
                      modulus_from_dict, smooth_hat)

__all__ = [
    "__version__",
    "HopfLabError", "DomainError", "DivergenceError", "InvariantViolation",
    "UnsupportedFamilyError", "GeometryError", "ConvergenceError",
    "Linear", "Power", "LogPower", "Scaled",
    "eval_modulus", "smooth_hat", "dini_integral", "is_dini", "modulus_from_dict",
]
