"""
Estimators for the stage count r and delay tau of one radio-over-fiber chain.

    - ml: grid-search maximum likelihood, linear PA regime
    - nls + pso: particle-swarm nonlinear least squares, cubic PA regime
"""

from .models import LinearModel, ParamEstimate, PsoConfig, SearchGrid2D, round_stages
from .ml import (
    a_hat,
    g_vector,
    ml_grid_search,
    ml_objective_flat,
    ml_objective_selective,
    prewhiten,
)
from .nls import NlsModel, NlsProblem, estimate_nonlinear, nls_bounds, nls_objective
from .pso import SwarmResult, pso_optimize, swarm_minimize

__all__ = [
    "LinearModel",
    "ParamEstimate",
    "PsoConfig",
    "SearchGrid2D",
    "round_stages",
    "a_hat",
    "g_vector",
    "ml_grid_search",
    "ml_objective_flat",
    "ml_objective_selective",
    "prewhiten",
    "NlsModel",
    "NlsProblem",
    "estimate_nonlinear",
    "nls_bounds",
    "nls_objective",
    "SwarmResult",
    "pso_optimize",
    "swarm_minimize",
]
