"""Provide imports for metrics sub-package."""

# Authors: The espsim developers
# License: AGPL

from .slo import attainment, p90_goodput, slo_thresholds, unloaded_latency
from .report import MetricsReport, compute_metrics, scale_up_histogram
