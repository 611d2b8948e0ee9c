"""Solvers for two-player nonzero-sum risk-sensitive stochastic games.

Core layout:

- :mod:`rsgames.model` -- game data model, validation, strategy profiles.
- :mod:`rsgames.markov` -- ergodicity and recurrence certificates.
- :mod:`rsgames.bimatrix` -- support-enumeration equilibria for one-shot games.
- :mod:`rsgames.discounted` -- discounted-criterion solver and verification.
- :mod:`rsgames.ergodic` -- ergodic-criterion solver and verification.
- :mod:`rsgames.simulate` -- seeded Monte Carlo cross-checks.
- :mod:`rsgames.service` -- FastAPI service wrapping the solvers.
- :mod:`rsgames.cli` -- thin command-line client for the service.
"""

__version__ = "0.1.0"

from rsgames.model import (
    GameSpec,
    MarkovProfile,
    StationaryProfile,
    ValidationReport,
    expected_exp_cost,
    induced_kernel,
    load_spec,
    pure_stationary_profile,
    spec_from_dict,
    spec_to_dict,
    uniform_profile,
    validate,
)

__all__ = [
    "GameSpec",
    "MarkovProfile",
    "StationaryProfile",
    "ValidationReport",
    "__version__",
    "expected_exp_cost",
    "induced_kernel",
    "load_spec",
    "pure_stationary_profile",
    "spec_from_dict",
    "spec_to_dict",
    "uniform_profile",
    "validate",
]
