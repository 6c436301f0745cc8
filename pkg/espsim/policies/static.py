"""Provide scheduling policies with parallel groups fixed at launch."""

# Authors: The espsim developers
# License: AGPL

from typing import Any, Dict, List, Optional, Sequence

from ..api.decorators import register_policy
from ..cluster import Batch, ClusterState, ParallelGroup
from ..costmodel import ScalingInfoBase, Strategy
from ..mechanisms import even_split, fill_descending
from ..utils import logger, raise_error, warn_with_log
from ..utils.exceptions import ConfigError
from .base import (
    BasePolicy,
    DecodeStep,
    PrefillBatch,
    ScheduleDecision,
    SchedulerState,
    choose_masters,
)
from .esp.dispatch import tipping_point


__all__ = [
    "StaticPolicy",
    "StaticTPPolicy",
    "StaticHybridPolicy",
    "ReplicatedPolicy",
    "spread_placement",
]


def spread_placement(
    lengths: Dict[int, int],
    instances: Sequence[int],
    free: Dict[int, int],
) -> Dict[int, Dict[int, int]]:
    """Split every request evenly over a group's instances.

    Requests whose even split does not fit fill the instances with the most
    free slots instead. ``free`` is updated in place.

    Parameters
    ----------
    lengths : dict of int to int
        Tokens per request id.
    instances : sequence of int
        Instances of the group.
    free : dict of int to int
        Free slots per instance.

    Returns
    -------
    dict of int to dict
        Placement per request.

    """
    placement = {}
    for rid, tokens in lengths.items():
        split = even_split(tokens, instances)
        if any(n > free[i] for i, n in split.items()):
            split = fill_descending(
                {rid: tokens}, {i: free[i] for i in instances}
            )[rid]
        split = {i: n for i, n in split.items() if n > 0}
        for i, n in split.items():
            free[i] -= n
        placement[rid] = split
    return placement


def _check_positive(**values: Optional[int]) -> None:
    for key, value in values.items():
        if value is not None and value < 1:
            raise_error(f"{key} must be >= 1, got {value}", klass=ConfigError)


class StaticPolicy(BasePolicy):
    """Continuous batching on groups whose membership never changes.

    Each group runs one iteration at a time. A group with room takes
    pending requests in FCFS order and prefills them; otherwise it decodes
    its batch. The queue head blocks the requests behind it.

    """

    def __init__(self) -> None:
        self.group_ids: List[int] = []

    def layout(self, n_instances: int) -> List[List[int]]:
        """Get the instances of every fixed group.

        Parameters
        ----------
        n_instances : int
            Instances in the cluster.

        Returns
        -------
        list of list of int
            Members of each group.

        """
        raise_error(
            msg="Concrete classes need to implement layout().",
            klass=NotImplementedError,
        )

    def strategy(self, dop: int) -> Strategy:
        """Get the strategy a group of ``dop`` instances runs with."""
        return Strategy(1, dop)

    def setup(self, cluster: ClusterState) -> None:
        """Create the fixed groups.

        Parameters
        ----------
        cluster : ClusterState
            The empty cluster.

        Raises
        ------
        ConfigError
            If the groups need more instances than the cluster has.

        """
        groups = self.layout(cluster.n_instances)
        used = sum(len(g) for g in groups)
        if used > cluster.n_instances:
            raise_error(
                f"{self!r} needs {used} instances but the cluster has "
                f"{cluster.n_instances}",
                klass=ConfigError,
            )
        if used < cluster.n_instances:
            warn_with_log(
                f"{self!r} leaves {cluster.n_instances - used} instances "
                "unused"
            )
        self.group_ids = []
        for instances in groups:
            gid = cluster.new_group_id()
            cluster.add_group(
                ParallelGroup(
                    id=gid,
                    instances=list(instances),
                    batch=Batch(gid, []),
                    fixed=True,
                )
            )
            self.group_ids.append(gid)
        logger.info(f"Fixed groups of {self!r}: {groups}")

    def strategies(
        self, sib: ScalingInfoBase, n_instances: int
    ) -> List[Strategy]:
        """Get the strategies of the fixed groups."""
        found = []
        for group in self.layout(n_instances):
            strategy = self.strategy(len(group))
            if strategy not in found and sib.has(strategy):
                found.append(strategy)
        return found

    def capacity(self, cluster: ClusterState, gid: int) -> int:
        """Get the KV slots of group ``gid``."""
        instances = cluster.groups[gid].instances
        return int(cluster.pool.capacity[instances].sum())

    def max_request_tokens(self, cluster: ClusterState) -> int:
        """Get the capacity of the largest fixed group."""
        return max(
            (self.capacity(cluster, gid) for gid in self.group_ids),
            default=0,
        )

    def reserved(self, state: SchedulerState, gid: int) -> int:
        """Sum the declared footprint of the requests group ``gid`` serves.

        Parameters
        ----------
        state : SchedulerState
            The scheduler state.
        gid : int
            The group.

        Returns
        -------
        int
            Tokens.

        """
        group = state.cluster.groups[gid]
        rids = group.request_ids + group.prefilling
        return sum(state.request(r).max_kv_tokens for r in rids)

    def route(
        self, state: SchedulerState, ready: List[int]
    ) -> Dict[int, List[int]]:
        """Assign pending requests to ready groups in FCFS order.

        A request goes to the ready group with the fewest reserved tokens
        that can take it: its declared footprint must fit the group's
        capacity and the group's prefill must stay within the tipping
        point. The scan stops at the first request no group takes.

        Parameters
        ----------
        state : SchedulerState
            The scheduler state.
        ready : list of int
            Groups able to start an iteration.

        Returns
        -------
        dict of int to list of int
            Requests per group, only for groups that got some.

        """
        sib = state.sib
        reserved = {gid: self.reserved(state, gid) for gid in ready}
        routed: Dict[int, List[int]] = {gid: [] for gid in ready}
        for rid in state.pending:
            request = state.request(rid)
            chosen = None
            for gid in sorted(ready, key=lambda g: (reserved[g], g)):
                if (
                    reserved[gid] + request.max_kv_tokens
                    > self.capacity(state.cluster, gid)
                ):
                    continue
                strategy = self.strategy(state.cluster.groups[gid].dop)
                lengths = [state.request(r).input_len for r in routed[gid]]
                if lengths and sib.prefill_time(
                    lengths + [request.input_len], strategy
                ) > tipping_point(sib, strategy):
                    continue
                chosen = gid
                break
            if chosen is None:
                break
            routed[chosen].append(rid)
            reserved[chosen] += request.max_kv_tokens
        return {gid: rids for gid, rids in routed.items() if rids}

    def prefill_batch(
        self,
        state: SchedulerState,
        gid: int,
        request_ids: List[int],
        free: Dict[int, int],
    ) -> PrefillBatch:
        """Build the prefill iteration of a fixed group.

        Parameters
        ----------
        state : SchedulerState
            The scheduler state.
        gid : int
            The group.
        request_ids : list of int
            The requests to prefill.
        free : dict of int to int
            Free slots per instance; updated in place.

        Returns
        -------
        PrefillBatch
            The iteration; the requests join the group's batch.

        """
        group = state.cluster.groups[gid]
        strategy = self.strategy(group.dop)
        lengths = {r: state.request(r).input_len for r in request_ids}
        return PrefillBatch(
            request_ids=list(request_ids),
            instances=list(group.instances),
            strategy=strategy,
            duration=state.sib.prefill_time(
                list(lengths.values()), strategy
            ),
            placement=spread_placement(lengths, group.instances, free),
            targets=list(group.instances),
            group_id=gid,
            join_group=gid,
        )

    def decode_step(
        self, state: SchedulerState, gid: int, free: Dict[int, int]
    ) -> Optional[DecodeStep]:
        """Build the decoding iteration of a fixed group.

        New tokens are spread over every member.

        Parameters
        ----------
        state : SchedulerState
            The scheduler state.
        gid : int
            The group.
        free : dict of int to int
            Free slots per instance.

        Returns
        -------
        DecodeStep or None
            The iteration, None if the new tokens do not fit.

        """
        group = state.cluster.groups[gid]
        rids = group.request_ids
        assignment = choose_masters(
            rids, group.instances, free, minimum=group.dop
        )
        if assignment is None:
            return None
        resident = int(state.cluster.group_tokens(gid).sum())
        return DecodeStep(
            group_id=gid,
            assignment=assignment,
            duration=state.sib.decode_time(
                len(rids), resident, group.dop, len(assignment.masters)
            ),
        )

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
        routed = self.route(state, ready)
        for gid in ready:
            if gid in routed:
                decision.prefill.append(
                    self.prefill_batch(state, gid, routed[gid], free)
                )
            elif state.cluster.groups[gid].request_ids:
                step = self.decode_step(state, gid, free)
                if step is None:
                    decision.stalled.append(gid)
                else:
                    decision.decode.append(step)
        return decision


@register_policy
class StaticTPPolicy(StaticPolicy):
    """One tensor-parallel group.

    Parameters
    ----------
    dop : int, optional
        Instances of the group, the whole cluster if None (default None).

    """

    name = "static-tp"

    def __init__(self, dop: Optional[int] = None) -> None:
        _check_positive(dop=dop)
        self.dop = dop
        super().__init__()

    def layout(self, n_instances: int) -> List[List[int]]:
        """Get one group of ``dop`` instances."""
        return [list(range(self.dop or n_instances))]

    def get_params(self) -> Dict[str, Any]:
        """Get the constructor parameters of the policy."""
        return {"dop": self.dop}


@register_policy
class StaticHybridPolicy(StaticPolicy):
    """One group combining sequence and tensor parallelism.

    Parameters
    ----------
    sp : int
        Sequence-parallel degree.
    tp : int
        Tensor-parallel degree.

    """

    name = "static-hybrid"

    def __init__(self, sp: int, tp: int) -> None:
        _check_positive(sp=sp, tp=tp)
        self.sp = sp
        self.tp = tp
        super().__init__()

    def layout(self, n_instances: int) -> List[List[int]]:
        """Get one group of ``sp * tp`` instances."""
        return [list(range(self.sp * self.tp))]

    def strategy(self, dop: int) -> Strategy:
        """Get the hybrid strategy."""
        return Strategy(self.sp, self.tp)

    def get_params(self) -> Dict[str, Any]:
        """Get the constructor parameters of the policy."""
        return {"sp": self.sp, "tp": self.tp}


@register_policy
class ReplicatedPolicy(StaticPolicy):
    """Copies of a tensor-parallel group behind a load balancer.

    Requests go to the group with the fewest reserved tokens.

    Parameters
    ----------
    dop : int
        Instances per copy.
    copies : int
        Number of copies.

    """

    name = "replicated"

    def __init__(self, dop: int, copies: int) -> None:
        _check_positive(dop=dop, copies=copies)
        self.dop = dop
        self.copies = copies
        super().__init__()

    def layout(self, n_instances: int) -> List[List[int]]:
        """Get ``copies`` consecutive groups of ``dop`` instances."""
        return [
            list(range(c * self.dop, (c + 1) * self.dop))
            for c in range(self.copies)
        ]

    def get_params(self) -> Dict[str, Any]:
        """Get the constructor parameters of the policy."""
        return {"dop": self.dop, "copies": self.copies}
