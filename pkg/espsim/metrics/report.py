"""Provide the metrics report computed from an event log."""

# Authors: The espsim developers
# License: AGPL

from dataclasses import dataclass, field, fields
from typing import TYPE_CHECKING, Any, Dict, Optional

import numpy as np
import pandas as pd

from ..costmodel import ScalingInfoBase
from ..utils import logger, raise_error
from ..utils.exceptions import EmptyLogError
from .slo import attainment, slo_thresholds, unloaded_latency


if TYPE_CHECKING:
    from ..simulation import EventLog, SimConfig


__all__ = ["MetricsReport", "compute_metrics", "scale_up_histogram"]


_QUANTILES = {"p50": 0.5, "p90": 0.9, "p99": 0.99}


@dataclass
class MetricsReport:
    """Aggregate metrics of one run.

    Latencies are in ms per token: end-to-end over the sequence length,
    time to prefill completion over the prompt length, and decoding time
    over the output length. Throughputs are per second of the span from
    the first arrival to the last finish.

    """

    n_requests: int
    n_finished: int
    n_rejected: int
    n_evictions: int
    span_ms: float
    mean_latency: float
    p50_latency: float
    p90_latency: float
    p99_latency: float
    mean_input_latency: float
    p50_input_latency: float
    p90_input_latency: float
    p99_input_latency: float
    mean_output_latency: float
    p50_output_latency: float
    p90_output_latency: float
    p99_output_latency: float
    token_throughput: float
    input_throughput: float
    request_throughput: float
    slo_attainment: float
    requests: pd.DataFrame = field(repr=False, compare=False)

    def to_dict(self) -> Dict[str, Any]:
        """Get the aggregates without the per-request frame."""
        return {
            f.name: getattr(self, f.name)
            for f in fields(self)
            if f.name != "requests"
        }

    def to_frame(self) -> pd.DataFrame:
        """Get the aggregates as a one-row data frame."""
        return pd.DataFrame([self.to_dict()])


def _summary(values: pd.Series, name: str) -> Dict[str, float]:
    values = values.dropna()
    out = {f"mean_{name}": float(values.mean()) if len(values) else np.nan}
    for key, q in _QUANTILES.items():
        out[f"{key}_{name}"] = (
            float(values.quantile(q)) if len(values) else np.nan
        )
    return out


def compute_metrics(
    log: "EventLog",
    config: "SimConfig",
    sib: Optional[ScalingInfoBase] = None,
) -> MetricsReport:
    """Compute the report of a run from its event log alone.

    Parameters
    ----------
    log : EventLog
        The complete log.
    config : SimConfig
        The configuration of the run.
    sib : ScalingInfoBase, optional
        The cost model; taken from ``config`` if None (default None).

    Returns
    -------
    MetricsReport
        The report.

    Raises
    ------
    EmptyLogError
        If no request arrived.

    """
    frame = log.requests_frame()
    if frame.empty:
        raise_error("The event log holds no request", klass=EmptyLogError)
    if sib is None:
        sib = config.get_sib()
    strategies = config.build_policy().strategies(sib, config.n_instances)
    frame = frame.copy()
    frame["unloaded"] = [
        unloaded_latency(int(i), int(o), sib, strategies)
        for i, o in zip(frame["input_len"], frame["output_len"])
    ]
    frame["slo"] = slo_thresholds(
        frame["unloaded"].to_numpy(),
        multiplier=config.slo_multiplier,
        absolute_ms=config.slo_absolute_ms,
    )
    frame["latency"] = frame["finish"] - frame["arrival"]
    seq_len = frame["input_len"] + frame["output_len"]
    frame["norm_latency"] = frame["latency"] / seq_len
    frame["norm_input_latency"] = (
        frame["prefill_end"] - frame["arrival"]
    ) / frame["input_len"]
    frame["norm_output_latency"] = (
        frame["finish"] - frame["prefill_end"]
    ) / frame["output_len"]
    frame["met_slo"] = (
        ~frame["rejected"].astype(bool)
        & frame["latency"].notna()
        & (frame["latency"] <= frame["slo"])
    )

    finished = frame[frame["finish"].notna()]
    span_ms = 0.0
    if len(finished):
        span_ms = float(finished["finish"].max() - frame["arrival"].min())
    span_s = span_ms / 1000.0
    if span_s > 0:
        token_throughput = float(
            (finished["input_len"] + finished["output_len"]).sum() / span_s
        )
        input_throughput = float(finished["input_len"].sum() / span_s)
        request_throughput = len(finished) / span_s
    else:
        token_throughput = input_throughput = request_throughput = np.nan

    report = MetricsReport(
        n_requests=len(frame),
        n_finished=len(finished),
        n_rejected=int(frame["rejected"].sum()),
        n_evictions=int(frame["evictions"].sum()),
        span_ms=span_ms,
        **_summary(frame["norm_latency"], "latency"),
        **_summary(frame["norm_input_latency"], "input_latency"),
        **_summary(frame["norm_output_latency"], "output_latency"),
        token_throughput=token_throughput,
        input_throughput=input_throughput,
        request_throughput=request_throughput,
        slo_attainment=attainment(
            frame["latency"].to_numpy(),
            frame["slo"].to_numpy(),
            frame["rejected"].to_numpy(),
        ),
        requests=frame,
    )
    logger.info(
        f"{report.n_finished}/{report.n_requests} requests finished, "
        f"SLO attainment {report.slo_attainment:.3f}, mean latency "
        f"{report.mean_latency:.3f} ms/token"
    )
    return report


def scale_up_histogram(
    log: "EventLog", window_ms: float = 10_000.0
) -> pd.Series:
    """Count scale-up events per time window.

    Parameters
    ----------
    log : EventLog
        The log.
    window_ms : float, optional
        Window length in ms (default 10000.0).

    Returns
    -------
    pandas.Series
        Events per window indexed by the window start in ms; windows up
        to the last event are present.

    """
    if window_ms <= 0:
        raise_error(f"window_ms must be positive, got {window_ms}")
    times = [e["time"] for e in log]
    if not times:
        return pd.Series([], dtype="int64", name="scale_ups")
    n_windows = int(max(times) // window_ms) + 1
    counts = np.zeros(n_windows, dtype=np.int64)
    for event in log.of_kind("scale_up"):
        counts[int(event["time"] // window_ms)] += 1
    index = pd.Index(np.arange(n_windows) * window_ms, name="window_ms")
    return pd.Series(counts, index=index, name="scale_ups")
