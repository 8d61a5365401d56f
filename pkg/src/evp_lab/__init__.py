"""Numerics for random walks driven by an irrational rotation of the circle.

A walker at x moves to x + alpha with probability p(x) and to x - alpha
otherwise.  The package computes invariant densities, Poisson-equation
solutions, exact and Monte Carlo laws of the walk, geometric-sum
distributions and a slow-mixing construction over Liouville-type rotations.
"""

from .arithmetic import (
    DiophantineProfile,
    RotationNumber,
    continued_fraction,
    diophantine_profile,
    golden_mean,
    liouville_alpha,
    parse_alpha,
)
from .cohomology import solve_damped, solve_eta, solve_rotation
from .environment import Environment, InvariantDensity, apply_T, classify, invariant_density
from .errors import EvpLabError
from .periodic import PeriodicFunction, logistic
from .poisson import PoissonCertificate, center, clt_variance, iterated_poisson, solve_poisson

__version__ = "0.1.0"

__all__ = [
    "DiophantineProfile",
    "Environment",
    "EvpLabError",
    "InvariantDensity",
    "PeriodicFunction",
    "PoissonCertificate",
    "RotationNumber",
    "apply_T",
    "center",
    "classify",
    "clt_variance",
    "continued_fraction",
    "diophantine_profile",
    "golden_mean",
    "invariant_density",
    "iterated_poisson",
    "liouville_alpha",
    "logistic",
    "parse_alpha",
    "solve_damped",
    "solve_eta",
    "solve_rotation",
    "solve_poisson",
]
