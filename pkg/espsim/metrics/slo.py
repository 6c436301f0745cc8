"""Provide SLO thresholds, attainment and goodput."""

# Authors: The espsim developers
# License: AGPL

from typing import Optional, Sequence

import numpy as np

from ..costmodel import ScalingInfoBase, Strategy
from ..utils import raise_error


__all__ = ["unloaded_latency", "slo_thresholds", "attainment", "p90_goodput"]


def unloaded_latency(
    input_len: int,
    output_len: int,
    sib: ScalingInfoBase,
    strategies: Sequence[Strategy],
) -> float:
    """Get the latency of a request alone on the cluster.

    The request is prefilled and decoded by the fastest strategy, each
    decoding step with a batch of one.

    Parameters
    ----------
    input_len : int
        Prompt length.
    output_len : int
        Number of generated tokens.
    sib : ScalingInfoBase
        The cost model.
    strategies : sequence of Strategy
        Strategies the policy can use.

    Returns
    -------
    float
        Latency in ms.

    Raises
    ------
    ValueError
        If ``strategies`` is empty.

    """
    if not strategies:
        raise_error("Cannot compute the unloaded latency without strategies")
    return min(
        sib.prefill_time([input_len], s)
        + output_len * sib.decode_time(1, input_len, s.dop)
        for s in strategies
    )


def slo_thresholds(
    unloaded: np.ndarray,
    multiplier: float = 25.0,
    absolute_ms: Optional[float] = None,
) -> np.ndarray:
    """Get the latency each request must meet.

    Parameters
    ----------
    unloaded : numpy.ndarray
        Unloaded latency per request.
    multiplier : float, optional
        SLO as a multiple of the unloaded latency (default 25.0).
    absolute_ms : float, optional
        Same SLO for every request in ms, overriding ``multiplier``
        (default None).

    Returns
    -------
    numpy.ndarray
        The thresholds.

    """
    unloaded = np.asarray(unloaded, dtype=float)
    if absolute_ms is not None:
        return np.full_like(unloaded, float(absolute_ms))
    return multiplier * unloaded


def attainment(
    latencies: np.ndarray, thresholds: np.ndarray, rejected: np.ndarray
) -> float:
    """Get the fraction of requests meeting their SLO.

    Rejected and unfinished requests miss.

    Parameters
    ----------
    latencies : numpy.ndarray
        End-to-end latency per request; NaN if it never finished.
    thresholds : numpy.ndarray
        SLO per request.
    rejected : numpy.ndarray
        Whether each request was rejected.

    Returns
    -------
    float
        Attainment in ``[0, 1]``, NaN without requests.

    """
    latencies = np.asarray(latencies, dtype=float)
    if latencies.size == 0:
        return float("nan")
    met = (
        ~np.asarray(rejected, dtype=bool)
        & ~np.isnan(latencies)
        & (np.nan_to_num(latencies, nan=np.inf) <= thresholds)
    )
    return float(met.mean())


def p90_goodput(
    rates: Sequence[float],
    attainments: Sequence[float],
    target: float = 0.9,
) -> float:
    """Get the highest swept rate at which the SLO attainment holds.

    Parameters
    ----------
    rates : sequence of float
        Offered rates in requests per second.
    attainments : sequence of float
        SLO attainment at each rate.
    target : float, optional
        Required attainment (default 0.9).

    Returns
    -------
    float
        The rate, 0.0 if no rate reaches ``target``.

    """
    if len(rates) != len(attainments):
        raise_error(
            f"Got {len(rates)} rates but {len(attainments)} attainments"
        )
    passing = [
        float(r) for r, a in zip(rates, attainments) if a >= target
    ]
    return max(passing, default=0.0)
