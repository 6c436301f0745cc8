"""Provide FCFS dispatch of pending requests for elastic prefill."""

# Authors: The espsim developers
# License: AGPL

import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

from ...costmodel import ScalingInfoBase, Strategy
from ...utils import logger
from ...utils.exceptions import UnknownStrategyError
from ..base import DecodingBatchView, SchedulerState


__all__ = [
    "DispatchResult",
    "prefill_strategy",
    "tipping_point",
    "expected_decode_latency",
    "extension_cost",
    "extension_gain",
    "dispatch",
]


@dataclass
class DispatchResult:
    """Requests chosen for the next prefill.

    Parameters
    ----------
    request_ids : list of int
        The dispatched requests, in FCFS order.
    instances : list of int
        Idle instances the prefill starts from.
    extensions : dict of int to list of int
        Decoding groups whose slots the prefill may take, with the requests
        that needed them.
    skipped : dict of int to str
        Pending requests passed over, with the failed check (``"memory"``
        or ``"eviction-risk"``).
    compute_bound : bool
        Whether the scan stopped at the tipping point.

    """

    request_ids: List[int] = field(default_factory=list)
    instances: List[int] = field(default_factory=list)
    extensions: Dict[int, List[int]] = field(default_factory=dict)
    skipped: Dict[int, str] = field(default_factory=dict)
    compute_bound: bool = False


def prefill_strategy(sib: ScalingInfoBase, n_instances: int) -> Strategy:
    """Get the sequence-parallel strategy for ``n_instances`` instances.

    The DoP is clipped to ``[1, sib.max_sp]``.

    """
    return Strategy(max(1, min(n_instances, sib.max_sp)), 1)


def tipping_point(sib: ScalingInfoBase, strategy: Strategy) -> float:
    """Get the tipping point of ``strategy``, infinite if unset."""
    try:
        return sib.tipping_point(strategy)
    except UnknownStrategyError:
        return math.inf


def expected_decode_latency(state: SchedulerState, rid: int) -> float:
    """Get the decoding latency a new request should expect.

    Before any request finished this is a singleton decoding step times
    half the declared output bound.

    Parameters
    ----------
    state : SchedulerState
        The scheduler state.
    rid : int
        The request.

    Returns
    -------
    float
        Latency in ms.

    """
    if state.avg_decode_latency is not None:
        return state.avg_decode_latency
    request = state.request(rid)
    step = state.sib.decode_time(1, request.input_len, 1)
    return step * request.max_output_len / 2


def extension_cost(
    state: SchedulerState,
    lengths: Sequence[int],
    n_instances: int,
    view: DecodingBatchView,
) -> float:
    """Price the output-latency hit of pausing a decoding batch.

    Every request of the batch waits one prefill iteration, spread over the
    tokens it has produced so far (at least one).

    Parameters
    ----------
    state : SchedulerState
        The scheduler state.
    lengths : sequence of int
        Prompt lengths of the prefill including the extension.
    n_instances : int
        Instances of the prefill including the whole decoding group.
    view : DecodingBatchView
        The decoding batch.

    Returns
    -------
    float
        Cost in ms per token.

    """
    strategy = prefill_strategy(state.sib, n_instances)
    duration = state.sib.prefill_time(lengths, strategy)
    return sum(
        duration / max(state.request(q).generated, 1)
        for q in view.request_ids
    )


def extension_gain(
    state: SchedulerState,
    request_ids: Sequence[int],
    view: DecodingBatchView,
) -> float:
    """Price the input-latency saving of starting requests now.

    Parameters
    ----------
    state : SchedulerState
        The scheduler state.
    request_ids : sequence of int
        The requests of the extension.
    view : DecodingBatchView
        The decoding batch whose slots they would use.

    Returns
    -------
    float
        Gain in ms per token.

    """
    gain = 0.0
    for rid in request_ids:
        wait = expected_decode_latency(state, rid) - view.min_exec_time
        gain += max(wait, 0.0) / state.request(rid).input_len
    return gain


def dispatch(state: SchedulerState) -> DispatchResult:
    """Pick the requests of the next prefill in FCFS order.

    A request is passed over only when its declared maximum footprint would
    exceed what the live requests leave over, or when neither the idle
    instances nor a worthwhile decoding group can hold its prompt. The scan
    stops once the prefill iteration would pass the tipping point; a
    request that exceeds it on its own is dispatched alone.

    Parameters
    ----------
    state : SchedulerState
        The scheduler state.

    Returns
    -------
    DispatchResult
        The dispatched requests and the provisional instances.

    """
    result = DispatchResult(instances=state.idle())
    if not state.pending:
        return result
    sib = state.sib
    free = state.free()
    available = sum(free[i] for i in result.instances)
    n_instances = len(result.instances)
    claimed = 0
    budget = state.future_budget()
    groups = sorted(
        state.decoding_batches(ready_only=True),
        key=lambda v: (-sum(free[i] for i in v.instances), v.group_id),
    )
    lengths: List[int] = []
    for rid in state.pending:
        request = state.request(rid)
        if request.max_kv_tokens > budget:
            result.skipped[rid] = "eviction-risk"
            continue
        need = request.input_len
        strategy = prefill_strategy(sib, n_instances)
        if lengths and sib.prefill_time(
            lengths + [need], strategy
        ) > tipping_point(sib, strategy):
            result.compute_bound = True
            break
        if claimed + need > available:
            for view in groups:
                if view.group_id in result.extensions:
                    continue
                extra = sum(free[i] for i in view.instances)
                if claimed + need > available + extra:
                    continue
                cost = extension_cost(
                    state,
                    lengths + [need],
                    n_instances + len(view.instances),
                    view,
                )
                gain = extension_gain(state, [rid], view)
                logger.debug(
                    f"Request {rid} on group {view.group_id}: gain {gain} "
                    f"vs cost {cost}"
                )
                if gain > cost:
                    result.extensions[view.group_id] = [rid]
                    available += extra
                    n_instances += len(view.instances)
                    break
            else:
                result.skipped[rid] = "memory"
                continue
        result.request_ids.append(rid)
        lengths.append(need)
        claimed += need
        budget -= request.max_kv_tokens
        if len(lengths) == 1 and sib.prefill_time(
            lengths, strategy
        ) > tipping_point(sib, strategy):
            result.compute_bound = True
            break
    return result
