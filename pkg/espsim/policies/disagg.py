"""Provide prefill-decode disaggregation with reactive migration."""

# Authors: The espsim developers
# License: AGPL

from typing import Any, Dict, List

from ..api.decorators import register_policy
from ..cluster import ClusterState, Phase
from ..costmodel import migration_time
from ..mechanisms import even_split
from .base import PrefillBatch, ScheduleDecision, SchedulerState
from .esp.dispatch import tipping_point
from .static import StaticPolicy, _check_positive


__all__ = ["DisaggPolicy"]


@register_policy
class DisaggPolicy(StaticPolicy):
    """Separate tensor-parallel groups for prefill and decoding.

    The prefill group also runs the first decoding step, then ships the
    whole KV of the batch to the decoding group.

    Parameters
    ----------
    prefill : int
        Instances of the prefill group.
    decode : int
        Instances of the decoding group.

    """

    name = "disagg"

    def __init__(self, prefill: int, decode: int) -> None:
        _check_positive(prefill=prefill, decode=decode)
        self.prefill = prefill
        self.decode = decode
        super().__init__()

    def layout(self, n_instances: int) -> List[List[int]]:
        """Get the prefill group, then the decoding group."""
        return [
            list(range(self.prefill)),
            list(range(self.prefill, self.prefill + self.decode)),
        ]

    @property
    def prefill_group(self) -> int:
        """Id of the prefill group."""
        return self.group_ids[0]

    @property
    def decode_group(self) -> int:
        """Id of the decoding group."""
        return self.group_ids[1]

    def max_request_tokens(self, cluster: ClusterState) -> int:
        """Get the capacity of the smaller group."""
        return min(self.capacity(cluster, gid) for gid in self.group_ids)

    def reserved(self, state: SchedulerState, gid: int) -> int:
        """Sum the declared footprint the decoding group has promised.

        Requests still in prefill count against the decoding group.

        """
        reserved = super().reserved(state, gid)
        if gid == self.decode_group:
            reserved += sum(
                r.max_kv_tokens
                for r in state.cluster.live_requests()
                if r.phase == Phase.PREFILL
            )
        return reserved

    def _admit(self, state: SchedulerState) -> List[int]:
        sib = state.sib
        cluster = state.cluster
        strategy = self.strategy(self.prefill)
        room = self.capacity(cluster, self.decode_group) - self.reserved(
            state, self.decode_group
        )
        staging = sum(
            state.free(cluster.groups[self.prefill_group].instances).values()
        )
        admitted: List[int] = []
        lengths: List[int] = []
        for rid in state.pending:
            request = state.request(rid)
            if request.max_kv_tokens > room:
                break
            if request.input_len + 1 > staging:
                break
            if lengths and sib.prefill_time(
                lengths + [request.input_len], strategy
            ) > tipping_point(sib, strategy):
                break
            admitted.append(rid)
            lengths.append(request.input_len)
            room -= request.max_kv_tokens
            staging -= request.input_len + 1
        return admitted

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
        cluster = state.cluster
        sib = state.sib
        free = state.free()
        if self.prefill_group not in state.busy:
            admitted = self._admit(state)
            if admitted:
                source = cluster.groups[self.prefill_group].instances
                target = cluster.groups[self.decode_group].instances
                lengths = [state.request(r).input_len for r in admitted]
                kv = [n + 1 for n in lengths]
                strategy = self.strategy(self.prefill)
                duration = (
                    sib.prefill_time(lengths, strategy)
                    + sib.decode_time(len(admitted), sum(lengths), len(source))
                    + migration_time(
                        sum(kv), state.bandwidth.average(source, target)
                    )
                )
                decision.prefill.append(
                    PrefillBatch(
                        request_ids=admitted,
                        instances=list(source),
                        strategy=strategy,
                        duration=duration,
                        placement={
                            rid: even_split(n, source)
                            for rid, n in zip(admitted, kv)
                        },
                        targets=list(target),
                        group_id=self.prefill_group,
                        join_group=self.decode_group,
                        handoff=True,
                        first_token=True,
                    )
                )
        gid = self.decode_group
        if gid not in state.busy and cluster.groups[gid].request_ids:
            step = self.decode_step(state, gid, free)
            if step is None:
                decision.stalled.append(gid)
            else:
                decision.decode.append(step)
        return decision

    def get_params(self) -> Dict[str, Any]:
        """Get the constructor parameters of the policy."""
        return {"prefill": self.prefill, "decode": self.decode}
