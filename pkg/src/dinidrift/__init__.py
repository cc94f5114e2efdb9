"""Stochastic flows and transport with bounded rough drift.

A numerical library for the constructive machinery around drifted parabolic
equations and their stochastic characteristics: modulus-of-continuity
calculus with singularity-aware quadrature, heat-kernel mild solvers, the
drift-straightening diffeomorphism, Euler-Maruyama flow ensembles with
shared-noise two-point statistics, transport solutions by inverse
characteristics, and Monte Carlo verification of the regularity estimates.
"""

__version__ = "0.1.0"

from . import moduli, grids, heat_kernel, pde, ito_tanaka, sde_flow, monte_carlo, transport
from .errors import (ConfigError, DinidriftError, DomainError, GridTooCoarse,
                     MissingArray, NoContraction, NoConvergence, NonFinite,
                     NotReached, ParseError, SmoothnessRequired, ValidationError)

__all__ = [
    "__version__",
    "moduli", "grids", "heat_kernel", "pde", "ito_tanaka", "sde_flow",
    "monte_carlo", "transport",
    "DinidriftError", "DomainError", "NonFinite", "GridTooCoarse",
    "NoContraction", "NoConvergence", "SmoothnessRequired", "MissingArray",
    "NotReached", "ConfigError", "ParseError", "ValidationError",
]
