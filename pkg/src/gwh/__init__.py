"""Singular stochastic control via Gittins indices and Wiener-Hopf extrema laws.

Modules

- levy:     Lévy models, Laplace exponents, Esscher tilts, path simulation
- extrema:  supremum/infimum laws at exponential times, scale functions
- gittins:  index functions kappa/mu, curves, thresholds, representation check
- stopping: parameterized stopping values and the perpetual put
- control:  monotone-follower and irreversible-investment solvers, FOC checks
- oracle:   lattice dynamic-programming verifiers, CRN policy comparison
- cli:      the `gwh` command-line front end
"""

from .errors import GwhError
from .levy import (
    CompoundPoisson,
    Discount,
    ExponentialDown,
    ExponentialUp,
    LevyModel,
    PointMass,
    SamplePath,
    TwoSidedExponential,
    brownian,
    difference_model,
    dual_model,
    esscher_tilt,
    laplace_exponent,
    phi_right_inverse,
    simulate_path,
)
from .mc import MCEstimate, SimConfig

__all__ = [
    "GwhError",
    "CompoundPoisson",
    "Discount",
    "ExponentialDown",
    "ExponentialUp",
    "LevyModel",
    "PointMass",
    "SamplePath",
    "TwoSidedExponential",
    "brownian",
    "difference_model",
    "dual_model",
    "esscher_tilt",
    "laplace_exponent",
    "phi_right_inverse",
    "simulate_path",
    "MCEstimate",
    "SimConfig",
]

__version__ = "0.1.0"
