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
Decorators and emit function bound to one EventBus.

Example:
    from rof_core.container import RofContainer
    from rof_core.event_types import SWEEP_POINT_COMPLETED

    container = RofContainer()
    on, when, middleware, emit = container.handlers()

    @on(SWEEP_POINT_COMPLETED)
    @when(lambda ctx: ctx.payload["failures"] > 0)
    async def report_failures(ctx):
        print(ctx.subject, ctx.payload["failures"])
"""

from typing import Callable, Optional


def create_handlers(event_bus):
    """
    Build (on, when, middleware, emit) bound to ``event_bus``.

    Called by RofContainer.handlers(); tests may call it directly with a bare EventBus.
    """

    def on(*event_patterns: str):
        """
        Register an async function as a handler for one or more event patterns.

        Glob patterns are accepted, e.g. ``@on("trial-*")``.
        """
        def register(func: Callable):
            # filters from @when decorators applied below this one
            early = func.__dict__.pop("_rof_pending_filters", [])
            func._rof_handler = event_bus.register(func, event_patterns, filters=early)
            return func

        return register

    def when(*conditions: Callable):
        """
        Add filter conditions to a handler; stacked @when decorators must all pass.

        Example:
            @on("trial-failed")
            @when(lambda ctx: ctx.payload.get("error") == "OptimizationFailure")
            async def on_pso_failure(ctx):
                ...
        """
        def attach(func: Callable):
            handler = getattr(func, "_rof_handler", None)
            target = handler.filters if handler is not None else func.__dict__.setdefault("_rof_pending_filters", [])
            target.extend(conditions)
            return func

        return attach

    def middleware(func: Callable):
        """Register ``async def mw(ctx, next)`` around every handler execution"""
        event_bus.add_middleware(func)
        return func

    async def emit(event_type: str, subject: str, payload: Optional[dict] = None, **extra):
        await event_bus.emit(event_type, subject, {} if payload is None else payload, **extra)

    return on, when, middleware, emit
