"""Preferential attachment trees with vertex death: simulation and analytics.

Submodules:

- ``rates``: rate-sequence families, derived prefix sums, regime reports
- ``malthus``: Laplace-transform series, Malthusian parameter, offspring
  and limiting degree distributions, predicted scaling constants
- ``sim_discrete``: the exact discrete chain (reference + fast kernel)
- ``sim_cmj``: the event-driven continuous-time embedding and samplers
- ``analysis``: exact enumeration, tilted importance sampling, tail-rate
  estimation, distribution tests
- ``experiment``: replicated experiment orchestration and emission
"""

from . import analysis, experiment, malthus, rates, sim_cmj, sim_discrete
from .rates import (
    Affine,
    Constant,
    DerivedSequences,
    Power,
    RateModel,
    Table,
    assumption_report,
    model_from_json,
    model_to_json,
)
from .malthus import (
    MalthusianSolution,
    OffspringDistribution,
    mu_hat,
    lambda_underline,
    limiting_degree_distribution,
    predicted_constants,
    solve_malthusian,
)

__version__ = "0.1.0"

__all__ = [
    "analysis",
    "experiment",
    "malthus",
    "rates",
    "sim_cmj",
    "sim_discrete",
    "Affine",
    "Constant",
    "Power",
    "Table",
    "RateModel",
    "DerivedSequences",
    "assumption_report",
    "model_from_json",
    "model_to_json",
    "MalthusianSolution",
    "OffspringDistribution",
    "mu_hat",
    "lambda_underline",
    "limiting_degree_distribution",
    "predicted_constants",
    "solve_malthusian",
]
