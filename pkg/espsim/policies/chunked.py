"""Provide chunked prefill co-scheduled with decoding."""

# Authors: The espsim developers
# License: AGPL

import math
from typing import Any, Dict, List, Optional, Sequence

from ..api.decorators import register_policy
from ..mechanisms import assign_masters
from ..utils import raise_error
from .base import DecodeStep, PrefillChunk, ScheduleDecision, SchedulerState
from .static import StaticPolicy, _check_positive, spread_placement


__all__ = ["ChunkedPolicy", "ideal_chunk_size"]


def ideal_chunk_size(trace: Sequence[Any], batch_size: int = 1) -> int:
    """Size prefill chunks after the prefill to decode token ratio.

    Parameters
    ----------
    trace : sequence of TraceRecord
        Records with ``input_len`` and ``output_len``.
    batch_size : int, optional
        Decoding batch size the chunk rides along with (default 1).

    Returns
    -------
    int
        ``ceil(total input tokens / total output tokens * batch_size)``.

    Raises
    ------
    ValueError
        If the trace is empty.

    """
    if not trace:
        raise_error("Cannot size chunks from an empty trace")
    prefill = sum(r.input_len for r in trace)
    decode = sum(r.output_len for r in trace)
    return max(1, math.ceil(prefill / decode * batch_size))


@register_policy
class ChunkedPolicy(StaticPolicy):
    """Chunked prefill fused into the decoding iterations.

    Each iteration of a group decodes its batch and prefills at most
    ``chunk_size`` prompt tokens of one request; the chunk's time adds to
    the decoding step.

    Parameters
    ----------
    chunk_size : int
        Prompt tokens per iteration.
    dop : int, optional
        Instances per tensor-parallel group; one group spans the cluster if
        None (default None).

    """

    name = "chunked"

    def __init__(self, chunk_size: int, dop: Optional[int] = None) -> None:
        _check_positive(chunk_size=chunk_size, dop=dop)
        self.chunk_size = chunk_size
        self.dop = dop
        super().__init__()

    def layout(self, n_instances: int) -> List[List[int]]:
        """Get the groups: the whole cluster or copies of ``dop``."""
        dop = self.dop or n_instances
        return [
            list(range(c * dop, (c + 1) * dop))
            for c in range(n_instances // dop)
        ]

    def _start_chunks(
        self, state: SchedulerState, ready: List[int]
    ) -> Dict[int, int]:
        """Hand queue heads to ready groups not prefilling anything."""
        cluster = state.cluster
        open_groups = [g for g in ready if not cluster.groups[g].prefilling]
        reserved = {gid: self.reserved(state, gid) for gid in open_groups}
        started: Dict[int, int] = {}
        for rid in state.pending:
            need = state.request(rid).max_kv_tokens
            chosen = None
            for gid in sorted(open_groups, key=lambda g: (reserved[g], g)):
                if gid in started:
                    continue
                if reserved[gid] + need <= self.capacity(cluster, gid):
                    chosen = gid
                    break
            if chosen is None:
                break
            started[chosen] = rid
        return started

    def schedule(self, state: SchedulerState) -> ScheduleDecision:
        """Take one scheduling decision.

        Parameters
        ----------
        state : SchedulerState
            The scheduler state.

        Returns
        -------
        ScheduleDecision
            The decision.

        """
        decision = ScheduleDecision()
        ready = [gid for gid in self.group_ids if gid not in state.busy]
        free = state.free()
        started = self._start_chunks(state, ready)
        for gid in ready:
            group = state.cluster.groups[gid]
            if group.prefilling:
                rid: Optional[int] = group.prefilling[0]
            else:
                rid = started.get(gid)
            step = None
            if group.request_ids:
                step = self.decode_step(state, gid, free)
                if step is None:
                    decision.stalled.append(gid)
                    continue
            if rid is None:
                if step is not None:
                    decision.decode.append(step)
                continue
            if step is None:
                step = DecodeStep(
                    group_id=gid,
                    assignment=assign_masters([], group.instances),
                    duration=0.0,
                )
            request = state.request(rid)
            offset = request.prefilled
            tokens = min(self.chunk_size, request.input_len - offset)
            placement = spread_placement({rid: tokens}, group.instances, free)
            step.chunk = PrefillChunk(
                request_id=rid,
                offset=offset,
                tokens=tokens,
                placement=placement[rid],
            )
            step.duration += state.sib.chunk_time(
                [(offset, tokens)], self.strategy(group.dop)
            )
            decision.decode.append(step)
        return decision

    def get_params(self) -> Dict[str, Any]:
        """Get the constructor parameters of the policy."""
        return {"chunk_size": self.chunk_size, "dop": self.dop}
