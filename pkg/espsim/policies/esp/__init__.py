"""Provide imports for esp sub-package."""

# Authors: The espsim developers
# License: AGPL

from .dispatch import (
    DispatchResult,
    dispatch,
    expected_decode_latency,
    extension_cost,
    extension_gain,
    prefill_strategy,
    tipping_point,
)
from .allocation import Allocation, allocate_instances
from .batching import (
    BatchPlan,
    DPTable,
    batch_dp,
    batch_dp_bruteforce,
    sort_instances,
    sort_requests,
)
from .scaling import (
    ScalingPlan,
    make_scaling_plan,
    plan_decode_step,
    plan_scale_down,
)
from .policy import ESPPolicy, schedule_iteration
