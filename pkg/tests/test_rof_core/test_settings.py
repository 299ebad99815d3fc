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
Tests for environment settings
"""

import logging
import os

import pytest
from pydantic import ValidationError

from rof_core.settings import PsoSettings, RofSettings


class TestRofSettings:
    """Test suite for ROF_* environment settings"""

    def test_defaults(self):
        """Defaults apply when no ROF_ variable is set"""
        settings = RofSettings()

        assert settings.log == "WARNING"
        assert settings.log_level == logging.WARNING
        assert settings.workers == 1
        assert settings.oversample == 4
        assert settings.singular_condition == 1e12

    def test_env_overrides(self):
        """ROF_ variables override the defaults"""
        os.environ["ROF_WORKERS"] = "8"
        os.environ["ROF_OVERSAMPLE"] = "2"
        os.environ["ROF_SINGULAR_CONDITION"] = "1e10"

        settings = RofSettings()

        assert settings.workers == 8
        assert settings.oversample == 2
        assert settings.singular_condition == 1e10

    def test_log_level_is_case_insensitive(self):
        """ROF_LOG accepts any case"""
        os.environ["ROF_LOG"] = "debug"

        settings = RofSettings()

        assert settings.log == "DEBUG"
        assert settings.log_level == logging.DEBUG

    def test_unknown_log_level_rejected(self):
        """An unknown ROF_LOG value fails validation"""
        os.environ["ROF_LOG"] = "chatty"

        with pytest.raises(ValidationError):
            RofSettings()

    def test_workers_must_be_positive(self):
        """ROF_WORKERS=0 fails validation"""
        os.environ["ROF_WORKERS"] = "0"

        with pytest.raises(ValidationError):
            RofSettings()


class TestPsoSettings:
    """Test suite for ROF_PSO_* settings"""

    def test_algorithm_defaults(self):
        """Swarm defaults: 100 iterations of 1000 particles"""
        pso = PsoSettings()

        assert pso.iterations == 100
        assert pso.particles == 1000
        assert pso.w_personal == 1.0
        assert pso.w_global == 0.7
        assert pso.inertia == 0.3
        assert pso.inertia_decay == 0.7

    def test_env_overrides(self):
        """ROF_PSO_ variables override the swarm defaults"""
        os.environ["ROF_PSO_PARTICLES"] = "64"
        os.environ["ROF_PSO_ITERATIONS"] = "5"

        pso = PsoSettings()

        assert pso.particles == 64
        assert pso.iterations == 5

    def test_decay_range(self):
        """Inertia decay outside (0, 1] fails validation"""
        os.environ["ROF_PSO_INERTIA_DECAY"] = "1.5"

        with pytest.raises(ValidationError):
            PsoSettings()
