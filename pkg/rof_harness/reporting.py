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
Progress reporting handlers for Monte Carlo runs.

Example:
    container = RofContainer()
    register_reporting(container)
    run_monte_carlo(scenario, container)
"""

import logging
from typing import Callable, List, Optional

from rof_core.container import RofContainer
from rof_core.event_types import (
    RUN_COMPLETED,
    SWEEP_POINT_COMPLETED,
    TRAJECTORY_POINT_COMPLETED,
    TRIAL_FAILED,
)

logger = logging.getLogger(__name__)


def register_reporting(container: RofContainer, failures: Optional[List[dict]] = None) -> Callable[[], None]:
    """
    Log run milestones and collect failed trials.

    Args:
        container: Container whose event bus the runner emits on
        failures: When given, every trial-failed payload is appended to it

    Returns:
        A function that removes the handlers and middleware again
    """
    on, when, middleware, emit = container.handlers()

    @middleware
    async def trace_events(ctx, next):
        logger.debug(f"{ctx.event_type} on {ctx.subject}")
        await next()

    @on(TRIAL_FAILED)
    async def report_trial_failure(ctx):
        logger.warning(f"{ctx.subject}: trial {ctx.payload['trial']} failed "
                       f"({ctx.payload.get('error')}: {ctx.payload.get('message')})")
        if failures is not None:
            failures.append(dict(ctx.payload, subject=ctx.subject))

    @on(SWEEP_POINT_COMPLETED)
    async def report_point(ctx):
        p = ctx.payload
        logger.info(f"{ctx.subject}: value={p['value']:.6g} rmse_tau={p['rmse_tau']:.4g} "
                    f"error_rate={p['error_rate']:.4g} failures={p['failures']}/{p['trials']} "
                    f"({ctx.get_metadata('wall_time', 0.0):.2f} s)")

    @on(TRAJECTORY_POINT_COMPLETED)
    async def report_position(ctx):
        logger.info(f"{ctx.subject}: position RMSE {ctx.payload['rmse']:.4f} m over {ctx.payload['trials']} trials")

    @on(RUN_COMPLETED)
    @when(lambda ctx: ctx.get_metadata("wall_time") is not None)
    async def report_run(ctx):
        logger.info(f"{ctx.subject}: {ctx.payload['points']} points in {ctx.get_metadata('wall_time'):.2f} s")

    def unregister():
        bus = container.event_bus()
        for func in (report_trial_failure, report_point, report_position, report_run):
            bus.discard(func._rof_handler)
        bus.remove_middleware(trace_events)

    return unregister
