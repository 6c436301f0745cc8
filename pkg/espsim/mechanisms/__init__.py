"""Provide imports for mechanisms sub-package."""

# Authors: The espsim developers
# License: AGPL

from .ring import RingSchedule, RingTransfer, build_ring_schedule
from .scaling import (
    ReactiveMigration,
    ScaleDownPlan,
    ScaleDownResult,
    even_split,
    fill_descending,
    proactive_scale_down,
    reactive_migrate,
)
from .decoding import (
    DecodeComm,
    MasterAssignment,
    assign_masters,
    decode_step_comm,
)
