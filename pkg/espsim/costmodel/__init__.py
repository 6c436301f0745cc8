"""Provide imports for costmodel sub-package."""

# Authors: The espsim developers
# License: AGPL

from .coefficients import (
    CostCoefficients,
    DecodeCoefficients,
    ProfileSample,
    Strategy,
)
from .bandwidth import BandwidthModel, migration_time
from .fitting import evaluate_fit, fit_coefficients
from .sib import ScalingInfoBase
