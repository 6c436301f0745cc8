"""Provide imports for policies sub-package."""

# Authors: The espsim developers
# License: AGPL

from .base import (
    BasePolicy,
    DecodeStep,
    DecodingBatchView,
    Migration,
    PrefillBatch,
    PrefillChunk,
    ScheduleDecision,
    SchedulerState,
    choose_masters,
    parse_policy_spec,
)
from .esp import ESPPolicy, schedule_iteration
from .static import (
    ReplicatedPolicy,
    StaticHybridPolicy,
    StaticPolicy,
    StaticTPPolicy,
)
from .chunked import ChunkedPolicy, ideal_chunk_size
from .disagg import DisaggPolicy
