"""Provide the policy base class, scheduler state and decision types."""

# Authors: The espsim developers
# License: AGPL

import re
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Set, Tuple

from ..cluster import ClusterState, Phase, Request
from ..costmodel import BandwidthModel, ScalingInfoBase, Strategy
from ..mechanisms import MasterAssignment, assign_masters
from ..utils import raise_error
from ..utils.exceptions import ConfigError


__all__ = [
    "SchedulerState",
    "DecodingBatchView",
    "PrefillBatch",
    "PrefillChunk",
    "DecodeStep",
    "Migration",
    "ScheduleDecision",
    "BasePolicy",
    "choose_masters",
    "parse_policy_spec",
]


@dataclass(frozen=True)
class DecodingBatchView:
    """Read-only summary of a decoding group.

    Parameters
    ----------
    group_id : int
        The group.
    request_ids : tuple of int
        Requests of its batch.
    instances : tuple of int
        Member instances.
    masters : tuple of int
        Current masters.
    ready : bool
        Whether the group can start an iteration now.
    paused : bool
        Whether some of its instances are lent to a prefill.
    min_exec_time : float
        Smallest accumulated decoding time over the batch.

    """

    group_id: int
    request_ids: Tuple[int, ...]
    instances: Tuple[int, ...]
    masters: Tuple[int, ...]
    ready: bool
    paused: bool
    min_exec_time: float


@dataclass
class SchedulerState:
    """Everything a policy may read to take one scheduling decision.

    Policies must not mutate ``cluster``; the engine applies decisions.

    Parameters
    ----------
    clock : float
        Current time in ms.
    cluster : ClusterState
        The cluster.
    pending : list of int
        Pending request ids in FCFS order.
    sib : ScalingInfoBase
        The cost model.
    bandwidth : BandwidthModel
        The interconnect.
    avg_decode_latency : float, optional
        Mean decoding time of finished requests, None before the first
        request finishes (default None).
    busy : set of int, optional
        Groups in the middle of an iteration or a migration (default empty).
    enable_scale_up : bool, optional
        Whether decoding groups may grow onto idle instances (default True).
    dp_bounds : {"none", "monotone"}, optional
        Split-point search of the batching DP; "none" is exact,
        "monotone" bounds the search and may be suboptimal (default
        "none").

    """

    clock: float
    cluster: ClusterState
    pending: List[int]
    sib: ScalingInfoBase
    bandwidth: BandwidthModel
    avg_decode_latency: Optional[float] = None
    busy: Set[int] = field(default_factory=set)
    enable_scale_up: bool = True
    dp_bounds: str = "none"

    def __post_init__(self) -> None:
        if self.dp_bounds not in ("none", "monotone"):
            raise_error(
                f"dp_bounds must be 'none' or 'monotone', got "
                f"{self.dp_bounds!r}",
                klass=ConfigError,
            )

    def request(self, rid: int) -> Request:
        """Get request ``rid``."""
        return self.cluster.requests[rid]

    def pending_requests(self) -> List[Request]:
        """Get the pending requests in FCFS order."""
        return [self.cluster.requests[rid] for rid in self.pending]

    def free(
        self, instances: Optional[Sequence[int]] = None
    ) -> Dict[int, int]:
        """Get free slots per instance.

        Parameters
        ----------
        instances : sequence of int, optional
            Instances to report, all if None (default None).

        Returns
        -------
        dict of int to int
            Free slots per instance.

        """
        if instances is None:
            instances = range(self.cluster.n_instances)
        instances = list(instances)
        free = self.cluster.pool.free_slots(instances)
        return {i: int(f) for i, f in zip(instances, free)}

    def idle(self) -> List[int]:
        """Get instances no group owns."""
        return self.cluster.idle_instances()

    def future_budget(self) -> int:
        """Get slots left once every live request reaches its bound.

        Returns
        -------
        int
            Total capacity minus the declared maximum footprint of every
            request in prefill or decoding.

        """
        return int(self.cluster.pool.capacity.sum()) - live_tokens(
            self.cluster.live_requests()
        )

    def batch_view(self, gid: int) -> DecodingBatchView:
        """Summarize decoding group ``gid``."""
        group = self.cluster.groups[gid]
        rids = tuple(group.request_ids)
        paused = self.cluster.is_paused(gid)
        exec_times = [self.cluster.requests[r].decode_exec_time for r in rids]
        return DecodingBatchView(
            group_id=gid,
            request_ids=rids,
            instances=tuple(group.instances),
            masters=tuple(group.masters),
            ready=gid not in self.busy and not paused,
            paused=paused,
            min_exec_time=min(exec_times) if exec_times else 0.0,
        )

    def decoding_batches(
        self, ready_only: bool = False
    ) -> List[DecodingBatchView]:
        """Get views of every group with a decoding batch.

        Parameters
        ----------
        ready_only : bool, optional
            Whether to skip busy and paused groups (default False).

        Returns
        -------
        list of DecodingBatchView
            Views sorted by group id.

        """
        views = []
        for gid in sorted(self.cluster.groups):
            group = self.cluster.groups[gid]
            if not group.request_ids:
                continue
            view = self.batch_view(gid)
            if ready_only and not view.ready:
                continue
            views.append(view)
        return views


@dataclass
class PrefillBatch:
    """One prefill iteration.

    Parameters
    ----------
    request_ids : list of int
        Requests of the batch.
    instances : list of int
        Instances running it, in ring order.
    strategy : Strategy
        Parallel strategy the iteration is charged with.
    duration : float
        Iteration time in ms.
    placement : dict of int to dict
        KV placement committed at launch, per request.
    targets : list of int, optional
        Instances that keep the KV for decoding (default empty: all).
    group_id : int, optional
        Existing group to run on, a new group if None (default None).
    join_group : int, optional
        Group whose batch the requests join afterwards; if None the
        requests decode on ``targets`` (default None).
    handoff : bool, optional
        Whether the KV moves to ``join_group`` afterwards (default False).
    first_token : bool, optional
        Whether the iteration also emits the first output token
        (default False).
    lenders : dict of int to int, optional
        Instance to lending group for preempted instances (default empty).

    """

    request_ids: List[int]
    instances: List[int]
    strategy: Strategy
    duration: float
    placement: Dict[int, Dict[int, int]]
    targets: List[int] = field(default_factory=list)
    group_id: Optional[int] = None
    join_group: Optional[int] = None
    handoff: bool = False
    first_token: bool = False
    lenders: Dict[int, int] = field(default_factory=dict)


@dataclass
class PrefillChunk:
    """Part of a prompt prefilled inside a decoding iteration.

    Parameters
    ----------
    request_id : int
        The request.
    offset : int
        Prompt tokens already prefilled.
    tokens : int
        Prompt tokens in this chunk.
    placement : dict of int to int
        KV placement of the chunk.

    """

    request_id: int
    offset: int
    tokens: int
    placement: Dict[int, int]


@dataclass
class DecodeStep:
    """One decoding iteration of a group.

    Parameters
    ----------
    group_id : int
        The group.
    assignment : MasterAssignment
        Master of every request.
    duration : float
        Iteration time in ms.
    scale_up : list of int, optional
        Idle instances joining the group first (default empty).
    release : list of int, optional
        Instances leaving the group first (default empty).
    query_volume : int, optional
        Query tokens broadcast in the step (default 0).
    overlapped_volume : int, optional
        Master-to-master traffic hidden behind attention (default 0).
    chunk : PrefillChunk, optional
        Prefill chunk fused into the step (default None).

    """

    group_id: int
    assignment: MasterAssignment
    duration: float
    scale_up: List[int] = field(default_factory=list)
    release: List[int] = field(default_factory=list)
    query_volume: int = 0
    overlapped_volume: int = 0
    chunk: Optional[PrefillChunk] = None

    @property
    def masters(self) -> List[int]:
        """Masters of the step."""
        return sorted(self.assignment.masters)


@dataclass(frozen=True)
class Migration:
    """KV tokens of one request moving between instances."""

    request_id: int
    source: int
    target: int
    tokens: int


@dataclass
class ScheduleDecision:
    """Everything the engine applies at one scheduling point.

    Parameters
    ----------
    prefill : list of PrefillBatch
        Prefill iterations to launch.
    decode : list of DecodeStep
        Decoding iterations to launch.
    migrations : list of Migration
        KV moves performed before the prefill iterations start.
    preempted : dict of int to list of int
        Instances lent by each paused decoding group.
    shrunk : dict of int to list of int
        Instances each decoding group gives up after migrating their KV.
    stalled : list of int
        Decoding groups that could not place their next tokens.
    rejected : list of int
        Requests dropped as too large.

    """

    prefill: List[PrefillBatch] = field(default_factory=list)
    decode: List[DecodeStep] = field(default_factory=list)
    migrations: List[Migration] = field(default_factory=list)
    preempted: Dict[int, List[int]] = field(default_factory=dict)
    shrunk: Dict[int, List[int]] = field(default_factory=dict)
    stalled: List[int] = field(default_factory=list)
    rejected: List[int] = field(default_factory=list)

    @property
    def dispatched(self) -> List[int]:
        """Requests leaving the pending queue."""
        rids = [r for batch in self.prefill for r in batch.request_ids]
        for step in self.decode:
            if step.chunk is not None and step.chunk.offset == 0:
                rids.append(step.chunk.request_id)
        return rids

    @property
    def instances(self) -> List[int]:
        """Instances running a prefill iteration."""
        return sorted(i for batch in self.prefill for i in batch.instances)

    @property
    def is_empty(self) -> bool:
        """Whether the decision launches nothing."""
        return not (self.prefill or self.decode or self.rejected)


def choose_masters(
    request_ids: Sequence[int],
    members: Sequence[int],
    free: Dict[int, int],
    minimum: int = 1,
) -> Optional[MasterAssignment]:
    """Pick the fewest masters that can store the next tokens.

    Candidates are taken by most free slots (ties by id); the smallest
    count from ``minimum`` up whose balanced assignment fits wins.

    Parameters
    ----------
    request_ids : sequence of int
        The decoding batch.
    members : sequence of int
        Instances of the group.
    free : dict of int to int
        Free slots per instance.
    minimum : int, optional
        Fewest masters to use (default 1).

    Returns
    -------
    MasterAssignment or None
        The assignment, None if no master count fits.

    """
    ranked = sorted(members, key=lambda i: (-free.get(i, 0), i))
    start = max(1, min(minimum, len(ranked)))
    for count in range(start, len(ranked) + 1):
        assignment = assign_masters(request_ids, ranked[:count])
        if all(
            len(rids) <= free.get(m, 0)
            for m, rids in assignment.masters.items()
        ):
            return assignment
    return None


class BasePolicy(ABC):
    """Abstract base class for scheduling policies.

    A policy is a pure decision procedure: given a
    :class:`SchedulerState` it returns a :class:`ScheduleDecision`. Static
    policies lay out their fixed groups once in :meth:`setup`.

    """

    name: str = ""

    def setup(self, cluster: ClusterState) -> None:
        """Create the groups a policy keeps for the whole run.

        Parameters
        ----------
        cluster : ClusterState
            The empty cluster.

        """

    @abstractmethod
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
        raise_error(
            msg="Concrete classes need to implement schedule().",
            klass=NotImplementedError,
        )

    @abstractmethod
    def strategies(
        self, sib: ScalingInfoBase, n_instances: int
    ) -> List[Strategy]:
        """Get the strategies the policy may run prefill with.

        Parameters
        ----------
        sib : ScalingInfoBase
            The cost model.
        n_instances : int
            Instances in the cluster.

        Returns
        -------
        list of Strategy
            The strategies.

        """
        raise_error(
            msg="Concrete classes need to implement strategies().",
            klass=NotImplementedError,
        )

    def max_request_tokens(self, cluster: ClusterState) -> int:
        """Get the largest KV footprint a single request may have.

        Parameters
        ----------
        cluster : ClusterState
            The cluster.

        Returns
        -------
        int
            Tokens; the whole pool unless a policy restricts placement.

        """
        return int(cluster.pool.capacity.sum())

    def get_params(self) -> Dict[str, Any]:
        """Get the constructor parameters of the policy."""
        return {}

    def __repr__(self) -> str:
        """Represent object as string."""
        params = ", ".join(
            f"{k}={v!r}" for k, v in self.get_params().items()
        )
        return f"<{self.__class__.__name__}({params})>"


_SPEC = re.compile(r"^(?P<kind>[a-z-]+)(?::(?P<args>.+))?$")


def parse_policy_spec(spec: str) -> Tuple[str, Dict[str, Any]]:
    """Parse a policy string such as ``"chunked:2048"``.

    Accepted forms are ``esp``, ``static-tp[:DOP]``,
    ``static-hybrid:SPxTP``, ``replicated:DOPxCOPIES``,
    ``chunked:CHUNK[@DOP]`` and ``disagg:P+D``.

    Parameters
    ----------
    spec : str
        The policy string.

    Returns
    -------
    str
        The registered policy name.
    dict
        Its constructor parameters.

    Raises
    ------
    ConfigError
        If the string is malformed.

    """
    match = _SPEC.match(spec.strip())
    if match is None:
        raise_error(f"Invalid policy spec: {spec!r}", klass=ConfigError)
    kind, args = match.group("kind"), match.group("args")
    try:
        if kind == "esp" and args is None:
            return kind, {}
        if kind == "static-tp":
            return kind, {} if args is None else {"dop": int(args)}
        if kind in ("static-hybrid", "replicated") and args is not None:
            left, right = (int(x) for x in args.lower().split("x"))
            if kind == "static-hybrid":
                return kind, {"sp": left, "tp": right}
            return kind, {"dop": left, "copies": right}
        if kind == "chunked" and args is not None:
            size, _, dop = args.partition("@")
            params: Dict[str, Any] = {"chunk_size": int(size)}
            if dop:
                params["dop"] = int(dop)
            return kind, params
        if kind == "disagg" and args is not None:
            prefill, decode = (int(x) for x in args.split("+"))
            return kind, {"prefill": prefill, "decode": decode}
    except ValueError as e:
        raise_error(
            f"Invalid parameters in policy spec {spec!r}",
            klass=ConfigError,
            exception=e,
        )
    raise_error(f"Invalid policy spec: {spec!r}", klass=ConfigError)


def live_tokens(requests: Sequence[Request]) -> int:
    """Sum the declared maximum footprint of live requests."""
    return sum(
        r.max_kv_tokens
        for r in requests
        if r.phase in (Phase.PREFILL, Phase.DECODING)
    )
