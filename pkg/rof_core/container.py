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
Dependency Injection Container for rof_core

Applications and tests override providers to swap the event bus, the
settings or the PSO defaults.

Example:
    from dependency_injector import providers
    from rof_core.container import RofContainer
    from rof_core.settings import RofSettings

    container = RofContainer()
    container.settings.override(providers.Object(RofSettings(workers=4)))
    on, when, middleware, emit = container.handlers()
"""

from dependency_injector import containers, providers

from rof_core.event_bus import EventBus
from rof_core.exceptions_dumpers import create_default_dumpers
from rof_core.handlers import create_handlers
from rof_core.settings import RofSettings
from rof_core.estimation.models import PsoConfig


def _pso_config_from_settings(settings: RofSettings, bounds_min=None, bounds_max=None, seed: int = 0) -> PsoConfig:
    return PsoConfig.from_settings(settings.pso, bounds_min=bounds_min, bounds_max=bounds_max, seed=seed)


class RofContainer(containers.DeclarativeContainer):

    config = providers.Configuration()

    # Process settings, read from ROF_* environment variables on first use
    settings = providers.Singleton(RofSettings)

    # Singleton instance for event dispatch across a run
    event_bus = providers.Singleton(EventBus)

    # Returns tuple: (on, when, middleware, emit)
    handlers = providers.Callable(
        create_handlers,
        event_bus=event_bus,
    )

    exceptions_dumpers = providers.Singleton(create_default_dumpers)

    # PsoConfig with the settings' algorithm constants; callers pass bounds and seed
    pso_config = providers.Factory(
        _pso_config_from_settings,
        settings=settings,
    )
