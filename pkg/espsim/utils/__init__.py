"""Provide imports for utils sub-package."""

# Authors: The espsim developers
# License: AGPL

from .logging import (
    configure_logging,
    logger,
    raise_error,
    sim_logger,
    warn_with_log,
)
from .exceptions import (
    CapacityExceededError,
    ConfigError,
    EmptyLogError,
    InfeasibleError,
    InfeasibleHeadroomError,
    InfeasiblePlanError,
    MasterFullError,
    NoCapacityError,
    RequestTooLargeError,
    SizeLimitError,
    TraceParseError,
    UnderdeterminedError,
    UnknownDistributionError,
    UnknownStrategyError,
)
