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
Event types emitted by the Monte Carlo harness.

Event types are plain strings; @on() accepts them directly, glob patterns included.
"""

TRIAL_COMPLETED = TrialCompleted = "trial-completed"
TRIAL_FAILED = TrialFailed = "trial-failed"
SWEEP_POINT_COMPLETED = SweepPointCompleted = "sweep-point-completed"
RUN_COMPLETED = RunCompleted = "run-completed"
TRAJECTORY_POINT_COMPLETED = TrajectoryPointCompleted = "trajectory-point-completed"
