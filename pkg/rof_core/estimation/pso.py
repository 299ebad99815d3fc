# Copyright 2025 The ROF Positioning Authors
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#     http://www.apache.org/licenses/LICENSE-2.0
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""
Box-constrained particle swarm optimisation.

Random stream order per run: initial positions, then for every iteration the
personal weights r1 followed by the global weights r2, each (particles, n).
Evaluation never touches the Generator, so batching or parallel evaluation
cannot change the result for a given seed.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List

import numpy as np

from rof_core.estimation.models import ParamEstimate, PsoConfig
from rof_core.exceptions import InvalidInputError, OptimizationFailure

logger = logging.getLogger(__name__)


@dataclass
class SwarmResult:
    theta: np.ndarray
    cost: float
    evaluations: int
    history: List[float] = field(default_factory=list)


def _evaluator(objective: Callable) -> Callable[[np.ndarray], np.ndarray]:
    batch = getattr(objective, "batch", None)
    if batch is not None:
        return lambda positions: np.asarray(batch(positions), dtype=float)
    return lambda positions: np.array([float(objective(theta)) for theta in positions])


def _checked(costs: np.ndarray, positions: np.ndarray) -> np.ndarray:
    bad = ~np.isfinite(costs)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise OptimizationFailure(
            f"objective returned {costs[i]} at particle {i}",
            theta=positions[i],
            value=float(costs[i]),
        )
    return costs


def swarm_minimize(objective: Callable, config: PsoConfig) -> SwarmResult:
    """
    Minimise ``objective`` over the box of ``config``.

    ``objective`` maps one parameter vector to a cost; when it also has a
    ``batch(positions)`` method, whole swarms are evaluated in one call.

    Raises:
        OptimizationFailure: a cost is NaN or infinite
    """
    rng = np.random.default_rng(config.seed)
    lo, hi = config.bounds_min, config.bounds_max
    shape = (config.particles, config.dimension)
    evaluate = _evaluator(objective)

    positions = lo + rng.random(shape) * (hi - lo)
    velocities = np.zeros(shape)
    costs = _checked(evaluate(positions), positions)
    evaluations = config.particles

    pbest, pbest_cost = positions.copy(), costs.copy()
    gbest, gbest_cost = positions[0].copy(), np.inf
    i = int(np.argmin(pbest_cost))
    if pbest_cost[i] < gbest_cost:
        gbest, gbest_cost = pbest[i].copy(), float(pbest_cost[i])
    history = [gbest_cost]

    inertia = config.inertia
    for iteration in range(config.iterations):
        r1 = rng.random(shape)
        r2 = rng.random(shape)
        velocities = (inertia * velocities
                      + config.w_personal * r1 * (pbest - positions)
                      + config.w_global * r2 * (gbest - positions))
        positions = np.clip(positions + velocities, lo, hi)
        costs = _checked(evaluate(positions), positions)
        evaluations += config.particles

        improved = costs < pbest_cost
        pbest[improved] = positions[improved]
        pbest_cost[improved] = costs[improved]
        i = int(np.argmin(pbest_cost))
        if pbest_cost[i] < gbest_cost:
            gbest, gbest_cost = pbest[i].copy(), float(pbest_cost[i])
        history.append(gbest_cost)
        inertia *= config.inertia_decay
        logger.debug(f"PSO iteration {iteration + 1}/{config.iterations}: best cost {gbest_cost:.6g}")

    return SwarmResult(theta=gbest, cost=gbest_cost, evaluations=evaluations, history=history)


def pso_optimize(objective: Callable, config: PsoConfig) -> ParamEstimate:
    """
    Swarm search over theta = [|A|, phi, tau, r].

    Example:
        config = PsoConfig(bounds_min=[0, -np.pi, 0, 0], bounds_max=[2, np.pi, 1e-8, 5], seed=7)
        estimate = pso_optimize(NlsProblem(model, y_time), config)
    """
    if config.dimension != 4:
        raise InvalidInputError(f"pso_optimize searches [|A|, phi, tau, r], got {config.dimension} bounds")
    result = swarm_minimize(objective, config)
    amplitude, phase, tau, r = (float(v) for v in result.theta)
    return ParamEstimate(
        a_hat=amplitude * np.exp(1j * phase),
        tau_hat=tau,
        r_hat=r,
        objective=result.cost,
        evaluations=result.evaluations,
        diagnostics={"theta": result.theta, "history": result.history},
    )
