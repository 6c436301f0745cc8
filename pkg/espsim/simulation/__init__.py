"""Provide imports for simulation sub-package."""

# Authors: The espsim developers
# License: AGPL

from .config import SimConfig
from .trace import (
    LENGTH_RANGES,
    TraceRecord,
    gen_trace,
    list_distributions,
    load_trace,
    save_trace,
)
from .events import EVENT_KINDS, EventLog
from .engine import Simulator
