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
Async event bus carrying Monte Carlo progress events.

The simulation kernels never see the bus. The harness emits one event per
finished trial, sweep point and run; reporting handlers subscribe by glob
pattern on the event type.
"""

import asyncio
import fnmatch
import logging
import re
from dataclasses import dataclass, field
from functools import partial
from typing import Any, Awaitable, Callable, Dict, List, Optional, Sequence

logger = logging.getLogger(__name__)

Middleware = Callable[["EventContext", Callable[[], Awaitable[None]]], Awaitable[None]]


@dataclass
class EventContext:
    """
    What a handler receives.

    Attributes:
        event_type: e.g. "trial-completed"
        subject: run identifier, "<scenario>/point-<i>" for per-point events
        payload: event data, a flat dict
        bus: the bus that dispatched the event
        metadata: emitter keyword arguments (wall_time, ...) plus anything
            middleware stores with set_metadata
    """
    event_type: str
    subject: str
    payload: Dict[str, Any]
    bus: "EventBus"
    metadata: Dict[str, Any] = field(default_factory=dict)

    def get_metadata(self, key: str, default: Any = None) -> Any:
        return self.metadata.get(key, default)

    def set_metadata(self, key: str, value: Any):
        self.metadata[key] = value

    async def emit(self, event_type: str, payload: Optional[dict] = None, subject: Optional[str] = None, **metadata):
        """Follow-up event on the same bus; the subject defaults to this one"""
        await self.bus.emit(event_type, subject or self.subject, payload or {}, **metadata)


@dataclass
class Handler:
    name: str
    func: Callable
    event_patterns: Sequence[str]
    filters: List[Callable] = field(default_factory=list)

    def __post_init__(self):
        self._pattern = re.compile("|".join(fnmatch.translate(p) for p in self.event_patterns))

    def matches(self, event_type: str) -> bool:
        return self._pattern.match(event_type) is not None

    async def check_filters(self, ctx: EventContext) -> bool:
        """All filters pass; a raising filter counts as failing"""
        for check in self.filters:
            try:
                passed = check(ctx)
                if asyncio.iscoroutine(passed):
                    passed = await passed
            except Exception as e:
                logger.warning(f"Filter of {self.name} raised on {ctx.event_type}: {e}")
                return False
            if not passed:
                return False
        return True

    async def __call__(self, ctx: EventContext):
        if not asyncio.iscoroutinefunction(self.func):
            raise TypeError(f"handler '{self.name}' must be declared 'async def'")
        await self.func(ctx)


async def _through(middleware: Middleware, inner: Callable[[], Awaitable[None]], ctx: EventContext):
    await middleware(ctx, inner)


class EventBus:
    """
    Dispatches each event to the matching handlers in registration order.

    Every handler runs inside the middleware chain, first-added outermost.
    Errors raised by a handler or its middleware are logged and the next
    handler still runs.
    """

    def __init__(self):
        self._handlers: List[Handler] = []
        self._middleware: List[Middleware] = []

    def register(self, func: Callable, event_patterns: Sequence[str],
                 filters: Optional[List[Callable]] = None) -> Handler:
        handler = Handler(name=func.__name__, func=func, event_patterns=list(event_patterns), filters=filters or [])
        self._handlers.append(handler)
        logger.debug(f"Registered {handler.name} for {', '.join(handler.event_patterns)}")
        return handler

    def unregister(self, name: str) -> int:
        """Drop every handler called ``name``; returns how many were removed"""
        kept = [h for h in self._handlers if h.name != name]
        removed = len(self._handlers) - len(kept)
        self._handlers = kept
        return removed

    def discard(self, handler: Handler) -> bool:
        """Drop this exact registration; False when it is not registered"""
        kept = [h for h in self._handlers if h is not handler]
        removed = len(kept) < len(self._handlers)
        self._handlers = kept
        return removed

    def unregister_all(self) -> int:
        removed = len(self._handlers)
        self._handlers, self._middleware = [], []
        return removed

    def add_middleware(self, middleware: Middleware):
        """``async def middleware(ctx, next)``; must await next() for the handler to run"""
        self._middleware.append(middleware)

    def remove_middleware(self, middleware: Middleware) -> bool:
        if middleware not in self._middleware:
            return False
        self._middleware.remove(middleware)
        return True

    def _chain(self, handler: Handler, ctx: EventContext) -> Callable[[], Awaitable[None]]:
        call = partial(handler, ctx)
        for middleware in reversed(self._middleware):
            call = partial(_through, middleware, call, ctx)
        return call

    async def emit(self, event_type: str, subject: str, payload: Dict[str, Any], **metadata):
        """
        Build the context and run the matching handlers.

        Example:
            await bus.emit("sweep-point-completed", "sigma2-sweep/point-0", row, wall_time=1.2)
        """
        ctx = EventContext(event_type=event_type, subject=subject, payload=payload, bus=self, metadata=dict(metadata))
        handlers = [h for h in self._handlers if h.matches(event_type)]
        logger.debug(f"{event_type} on {subject}: {len(handlers)} handler(s)")
        for handler in handlers:
            if not await handler.check_filters(ctx):
                continue
            try:
                await self._chain(handler, ctx)()
            except Exception as e:
                logger.error(f"Handler {handler.name} failed on {event_type}: {e}", exc_info=True)
