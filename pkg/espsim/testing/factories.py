"""Provide builders for small clusters, SIBs and scheduler states."""

# Authors: The espsim developers
# License: AGPL

from typing import Callable, Dict, List, Optional, Sequence, Tuple

from ..cluster import (
    Batch,
    ClusterState,
    KVCachePool,
    ParallelGroup,
    Phase,
    Request,
    declared_output_bound,
)
from ..costmodel import (
    BandwidthModel,
    CostCoefficients,
    DecodeCoefficients,
    ScalingInfoBase,
    Strategy,
)


__all__ = [
    "make_request",
    "make_pool",
    "make_cluster",
    "make_sib",
    "uniform_sib",
    "make_state",
    "make_report",
]


def make_request(
    rid: int = 0,
    input_len: int = 10,
    output_len: int = 4,
    arrival: float = 0.0,
    max_output_len: Optional[int] = None,
) -> Request:
    """Build a pending request.

    Parameters
    ----------
    rid : int, optional
        Request id (default 0).
    input_len : int, optional
        Prompt length (default 10).
    output_len : int, optional
        True output length (default 4).
    arrival : float, optional
        Arrival time in ms (default 0.0).
    max_output_len : int, optional
        Declared bound; the next power of two if None (default None).

    Returns
    -------
    Request
        The request.

    """
    if max_output_len is None:
        max_output_len = declared_output_bound(output_len)
    return Request(
        id=rid,
        arrival_time=arrival,
        input_len=input_len,
        true_output_len=output_len,
        max_output_len=max_output_len,
    )


def make_pool(
    capacities: Sequence[int], used: Optional[Sequence[int]] = None
) -> KVCachePool:
    """Build a pool, optionally pre-filled by an anonymous request.

    Parameters
    ----------
    capacities : sequence of int
        Capacity per instance.
    used : sequence of int, optional
        Tokens already used per instance (default None).

    Returns
    -------
    KVCachePool
        The pool.

    """
    pool = KVCachePool(capacities)
    if used is not None and sum(used) > 0:
        filler = make_request(rid=-1, input_len=max(1, sum(used)))
        pool.allocate(filler, {i: int(u) for i, u in enumerate(used) if u})
    return pool


def make_cluster(
    capacities: Sequence[int], instances_per_node: int = 8
) -> ClusterState:
    """Build an empty cluster state."""
    return ClusterState(KVCachePool(capacities), instances_per_node)


def make_sib(
    max_dop: int = 8,
    alpha: Callable[[int], float] = lambda d: 1.0,
    beta: Callable[[int], float] = lambda d: 0.0,
    gamma: Callable[[int], float] = lambda d: 0.0,
    tipping: float = 1e9,
    decode: Tuple[float, float, float, int] = (1.0, 0.0, 0.0, 64),
    tensor_parallel: bool = True,
) -> ScalingInfoBase:
    """Build a SIB whose coefficients are functions of the DoP.

    Parameters
    ----------
    max_dop : int, optional
        Largest DoP to define (default 8).
    alpha, beta, gamma : callable, optional
        Map a DoP to the coefficient (defaults give a 1 ms iteration).
    tipping : float, optional
        Tipping point of every strategy (default 1e9).
    decode : tuple, optional
        ``(alpha, beta, gamma, threshold)`` of decoding
        (default ``(1.0, 0.0, 0.0, 64)``).
    tensor_parallel : bool, optional
        Whether to add ``(1, d)`` strategies with the same coefficients
        (default True).

    Returns
    -------
    ScalingInfoBase
        The SIB.

    """
    prefill: Dict[Strategy, CostCoefficients] = {}
    for d in range(1, max_dop + 1):
        coef = CostCoefficients(alpha(d), beta(d), gamma(d))
        prefill[Strategy(d, 1)] = coef
        if tensor_parallel:
            prefill[Strategy(1, d)] = coef
    return ScalingInfoBase(
        prefill=prefill,
        decode=DecodeCoefficients(*decode),
        tipping=tipping,
    )


def uniform_sib(max_dop: int = 8) -> ScalingInfoBase:
    """Build a SIB with 1 ms prefill and 1 ms decoding everywhere."""
    return make_sib(max_dop=max_dop)


def make_state(
    free: Sequence[int],
    pending: Sequence[Request] = (),
    batches: Sequence[Tuple[List[int], List[Request], List[int]]] = (),
    sib: Optional[ScalingInfoBase] = None,
    clock: float = 0.0,
    avg_decode_latency: Optional[float] = None,
    instances_per_node: int = 8,
    **options,
):
    """Build a scheduler state.

    Every instance starts with ``free`` slots. Each decoding batch is given
    as ``(instances, requests, masters)``; the requests must already carry
    their placement and are committed to the pool.

    Parameters
    ----------
    free : sequence of int
        Capacity per instance.
    pending : sequence of Request, optional
        The pending queue in FCFS order (default empty).
    batches : sequence of tuple, optional
        Decoding batches (default empty).
    sib : ScalingInfoBase, optional
        The SIB; :func:`uniform_sib` if None (default None).
    clock : float, optional
        Current time (default 0.0).
    avg_decode_latency : float, optional
        Mean decoding time of finished requests (default None).
    instances_per_node : int, optional
        Instances per node (default 8).
    **options
        Extra :class:`~espsim.policies.SchedulerState` fields.

    Returns
    -------
    SchedulerState
        The state.

    """
    from ..policies import SchedulerState

    cluster = make_cluster(free, instances_per_node=instances_per_node)
    for request in pending:
        cluster.requests[request.id] = request
    for instances, requests, masters in batches:
        gid = cluster.new_group_id()
        for request in requests:
            placement = dict(request.placement)
            request.placement = {}
            cluster.pool.allocate(request, placement)
            request.phase = Phase.DECODING
            cluster.requests[request.id] = request
        cluster.add_group(
            ParallelGroup(
                id=gid,
                instances=list(instances),
                batch=Batch(gid, [r.id for r in requests]),
                masters=list(masters),
            )
        )
    if sib is None:
        sib = uniform_sib(max_dop=max(len(free), 1))
    return SchedulerState(
        clock=clock,
        cluster=cluster,
        pending=[r.id for r in pending],
        sib=sib,
        bandwidth=BandwidthModel(instances_per_node=instances_per_node),
        avg_decode_latency=avg_decode_latency,
        **options,
    )


def make_report():
    """Build the metrics report of two hand-written requests.

    Both requests have 4 prompt and 4 output tokens on a one-instance
    cluster with 1 ms iterations.

    Returns
    -------
    MetricsReport
        The report.

    """
    from ..metrics import compute_metrics
    from ..simulation import EventLog, SimConfig

    log = EventLog()
    for rid, arrival, done, end in [(0, 0.0, 2.0, 6.0), (1, 1.0, 4.0, 9.0)]:
        log.record(
            "arrival", arrival, request=rid, input_len=4, output_len=4
        )
        log.record("prefill_end", done, requests=[rid])
        log.record("finish", end, request=rid)
    config = SimConfig(
        n_instances=1, kv_capacity=1_000, sib=make_sib(max_dop=1)
    )
    return compute_metrics(log, config)
