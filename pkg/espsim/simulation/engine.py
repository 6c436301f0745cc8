"""Provide the discrete-event simulation engine."""

# Authors: The espsim developers
# License: AGPL

import heapq
import itertools
from collections import defaultdict
from typing import Any, Dict, List, Optional, Sequence, Set, Tuple

from ..cluster import (
    Batch,
    ClusterState,
    ParallelGroup,
    Phase,
    Request,
    declared_output_bound,
)
from ..costmodel import ScalingInfoBase, migration_time
from ..mechanisms import (
    ScaleDownPlan,
    build_ring_schedule,
    even_split,
    proactive_scale_down,
    reactive_migrate,
)
from ..policies import (
    BasePolicy,
    DecodeStep,
    Migration,
    PrefillBatch,
    ScheduleDecision,
    SchedulerState,
)
from ..utils import logger, raise_error, sim_logger
from ..utils.exceptions import RequestTooLargeError
from .config import SimConfig
from .events import EventLog
from .trace import TraceRecord


__all__ = ["Simulator"]


# Completions at the same time go before arrivals
_COMPLETION = 0
_ARRIVAL = 1


class Simulator:
    """Event-driven simulator of one cluster under one policy.

    Time jumps to the next arrival or group completion. After every batch
    of simultaneous events the policy is asked for a decision, which the
    engine applies: it moves KV, launches prefill iterations and
    launches decoding steps. Simultaneous completions are handled by
    ascending group id.

    Parameters
    ----------
    config : SimConfig
        The configuration.
    policy : BasePolicy, optional
        The policy; built from ``config`` if None (default None).
    sib : ScalingInfoBase, optional
        The cost model; taken from ``config`` if None (default None).

    """

    def __init__(
        self,
        config: SimConfig,
        policy: Optional[BasePolicy] = None,
        sib: Optional[ScalingInfoBase] = None,
    ) -> None:
        self.config = config
        self.policy = config.build_policy() if policy is None else policy
        self.sib = config.get_sib() if sib is None else sib
        self.bandwidth = config.bandwidth
        self._log = sim_logger(lambda: self.clock)
        self._reset()
        self._fresh = True

    def _reset(self) -> None:
        self.clock = 0.0
        self.cluster: ClusterState = self.config.build_cluster()
        self.policy.setup(self.cluster)
        self.log = EventLog()
        self._heap: List[Tuple[float, int, int, int]] = []
        self._payloads: Dict[int, Tuple[Any, ...]] = {}
        self._seq = itertools.count()
        self._pending: List[int] = []
        self._busy: Set[int] = set()
        self._stalled: Set[int] = set()
        self._decode_latency_sum = 0.0
        self._finished = 0
        self._max_request = self.policy.max_request_tokens(self.cluster)

    # Event queue

    def _push(self, time: float, priority: int, key: int, *payload) -> None:
        seq = next(self._seq)
        self._payloads[seq] = payload
        heapq.heappush(self._heap, (time, priority, key, seq))

    def _pop(self) -> Tuple[Any, ...]:
        time, _, _, seq = heapq.heappop(self._heap)
        self.clock = time
        return self._payloads.pop(seq)

    @property
    def avg_decode_latency(self) -> Optional[float]:
        """Mean decoding execution time of finished requests so far."""
        if self._finished == 0:
            return None
        return self._decode_latency_sum / self._finished

    def run(self, trace: Sequence[TraceRecord]) -> EventLog:
        """Simulate a trace to completion.

        Parameters
        ----------
        trace : sequence of TraceRecord
            The requests; request ids follow the order of ``trace``.

        Returns
        -------
        EventLog
            Everything that happened.

        Raises
        ------
        RequestTooLargeError
            If a request can never be served and ``on_oversized`` is
            "raise".
        RuntimeError
            If the cluster invariants break or the run cannot progress.

        """
        if not self._fresh:
            self._reset()
        self._fresh = False
        logger.info(
            f"Simulating {len(trace)} requests with {self.policy!r} on "
            f"{self.config.n_instances} instances"
        )
        for rid, record in enumerate(trace):
            request = Request(
                id=rid,
                arrival_time=float(record.arrival_ms),
                input_len=int(record.input_len),
                true_output_len=int(record.output_len),
                max_output_len=declared_output_bound(
                    int(record.output_len), self.config.exact_output_bound
                ),
            )
            self._push(request.arrival_time, _ARRIVAL, rid, "arrival", request)
        while True:
            if self._heap:
                now = self._heap[0][0]
                while self._heap and self._heap[0][0] == now:
                    self._handle(self._pop())
            elif self._unfinished():
                self._break_deadlock()
            else:
                break
            self._schedule()
            if self.config.check_invariants:
                self.cluster.check_invariants()
        self._log.info(f"Simulation finished with {len(self.log)} events")
        return self.log

    def _unfinished(self) -> bool:
        return any(
            r.phase not in (Phase.FINISHED, Phase.REJECTED)
            for r in self.cluster.requests.values()
        )

    def _handle(self, payload: Tuple[Any, ...]) -> None:
        kind = payload[0]
        if kind == "arrival":
            self._arrive(payload[1])
        elif kind == "prefill":
            self._complete_prefill(*payload[1:])
        elif kind == "decode":
            self._complete_decode(*payload[1:])
        elif kind == "resume":
            gid = payload[1]
            self._busy.discard(gid)
            if gid in self.cluster.groups:
                self.log.record(
                    "resume",
                    self.clock,
                    group_id=gid,
                    group=self.cluster.groups[gid].instances,
                )
        else:
            raise_error(f"Unknown event payload: {kind}", klass=RuntimeError)

    # Requests entering and leaving

    def _oversized(self, request: Request, reason: str) -> None:
        if self.config.on_oversized == "raise":
            raise_error(
                f"Request {request.id} ({request.max_kv_tokens} tokens) "
                f"{reason}",
                klass=RequestTooLargeError,
            )
        self._reject(request)

    def _reject(self, request: Request) -> None:
        request.phase = Phase.REJECTED
        if request.id in self._pending:
            self._pending.remove(request.id)
        self.log.record("reject", self.clock, request=request.id)
        self._log.info(f"Rejected request {request.id}")

    def _arrive(self, request: Request) -> None:
        self.cluster.requests[request.id] = request
        self.log.record(
            "arrival",
            self.clock,
            request=request.id,
            input_len=request.input_len,
            output_len=request.true_output_len,
            max_output_len=request.max_output_len,
        )
        if request.max_kv_tokens > self._max_request:
            self._oversized(
                request,
                f"exceeds the {self._max_request} tokens "
                f"{self.policy.name} can hold",
            )
            return
        self._pending.append(request.id)

    def _requeue(self, request: Request) -> None:
        self._pending.append(request.id)
        self._pending.sort(
            key=lambda r: (self.cluster.requests[r].arrival_time, r)
        )

    def _finish(self, request: Request, gid: int) -> None:
        request.phase = Phase.FINISHED
        request.finish_time = self.clock
        self.cluster.pool.free(request)
        group = self.cluster.groups.get(gid)
        if group is not None and group.batch is not None:
            if request.id in group.batch.request_ids:
                group.batch.request_ids.remove(request.id)
        self._decode_latency_sum += request.decode_exec_time
        self._finished += 1
        self.log.record(
            "finish",
            self.clock,
            request=request.id,
            group_id=gid,
            latency=self.clock - request.arrival_time,
        )

    def _drop_if_empty(self, gid: int) -> None:
        group = self.cluster.groups.get(gid)
        if (
            group is None
            or group.fixed
            or group.request_ids
            or group.prefilling
            or gid in self._busy
        ):
            return
        instances = list(group.instances)
        self.cluster.remove_group(gid)
        self._stalled.discard(gid)
        self.log.record(
            "release",
            self.clock,
            group_id=gid,
            group=instances,
            instances=instances,
        )

    def _free(self) -> Dict[int, int]:
        free = self.cluster.pool.free_slots()
        return {i: int(f) for i, f in enumerate(free)}

    # Scheduling

    def _state(self) -> SchedulerState:
        return SchedulerState(
            clock=self.clock,
            cluster=self.cluster,
            pending=list(self._pending),
            sib=self.sib,
            bandwidth=self.bandwidth,
            avg_decode_latency=self.avg_decode_latency,
            busy=set(self._busy),
            enable_scale_up=self.config.enable_scale_up,
            dp_bounds=self.config.dp_bounds,
        )

    def _schedule(self) -> None:
        decision = self.policy.schedule(self._state())
        for gid in decision.stalled:
            if gid not in self._stalled and gid in self.cluster.groups:
                self.log.record(
                    "stall",
                    self.clock,
                    group_id=gid,
                    group=self.cluster.groups[gid].instances,
                )
        self._stalled = set(decision.stalled)
        if decision.is_empty:
            return
        self._log.debug(
            f"{len(decision.prefill)} prefill, "
            f"{len(decision.decode)} decode, {len(decision.migrations)} "
            f"migrations"
        )
        self._apply(decision)

    def _apply(self, decision: ScheduleDecision) -> None:
        for rid in decision.rejected:
            self._reject(self.cluster.requests[rid])
        delay = self._migrate(decision.migrations)
        moved = {m.source for m in decision.migrations}
        for gid, instances in decision.shrunk.items():
            moved.update(instances)
            if delay > 0:
                self._busy.add(gid)
                self._push(self.clock + delay, _COMPLETION, gid, "resume", gid)
        for gid, instances in decision.preempted.items():
            for instance in instances:
                self.cluster.loaned_from[instance] = gid
            self.log.record(
                "preempt",
                self.clock,
                group_id=gid,
                group=self.cluster.groups[gid].instances,
                instances=instances,
            )
        for batch in decision.prefill:
            start = self.clock
            if moved & set(batch.instances):
                start += delay
            self._launch_prefill(batch, start)
        for step in decision.decode:
            self._launch_decode(step)

    def _migrate(self, migrations: List[Migration]) -> float:
        """Apply KV moves and get the time they take."""
        per_pair: Dict[Tuple[int, int], int] = defaultdict(int)
        for m in migrations:
            request = self.cluster.requests[m.request_id]
            self.cluster.pool.move(request, m.source, m.target, m.tokens)
            per_pair[(m.source, m.target)] += m.tokens
            self.log.record(
                "migration",
                self.clock,
                request=m.request_id,
                source=m.source,
                target=m.target,
                volume=m.tokens,
            )
        return max(
            (
                migration_time(tokens, self.bandwidth.pair(*pair))
                for pair, tokens in per_pair.items()
            ),
            default=0.0,
        )

    # Prefill

    def _launch_prefill(self, batch: PrefillBatch, start: float) -> None:
        cluster = self.cluster
        rids = list(batch.request_ids)
        elastic = batch.group_id is None
        if elastic:
            gid = cluster.new_group_id()
            cluster.add_group(
                ParallelGroup(gid, [], batch=Batch(gid, rids, Phase.PREFILL))
            )
            for instance in batch.instances:
                cluster.take_instance(instance, gid)
        else:
            gid = batch.group_id
            cluster.groups[gid].prefilling.extend(rids)
        group = cluster.groups[gid]
        scale_down = None
        if elastic:
            lengths = {rid: cluster.requests[rid].input_len for rid in rids}
            ring = build_ring_schedule(
                batch.instances,
                even_split(sum(lengths.values()), batch.instances),
            )
            targets = batch.targets or batch.instances
            scale_down = proactive_scale_down(
                ring,
                ScaleDownPlan(
                    source=tuple(batch.instances),
                    target=tuple(targets),
                    placement=batch.placement,
                    lengths=lengths,
                ),
                self._free(),
            )
            self.log.record(
                "ring",
                start,
                group_id=gid,
                group=batch.instances,
                requests=rids,
                volume=ring.total_volume,
            )
        for rid in rids:
            request = cluster.requests[rid]
            self._pending.remove(rid)
            request.phase = Phase.PREFILL
            request.prefill_start_time = start
            cluster.pool.allocate(request, batch.placement[rid])
        self.log.record(
            "dispatch",
            self.clock,
            group_id=gid,
            group=batch.instances,
            requests=rids,
        )
        self.log.record(
            "prefill_start",
            start,
            group_id=gid,
            group=group.instances,
            requests=rids,
            strategy=batch.strategy.label,
            duration=batch.duration,
        )
        self._busy.add(gid)
        self._push(
            start + batch.duration,
            _COMPLETION,
            gid,
            "prefill",
            gid,
            batch,
            scale_down,
        )

    def _complete_prefill(self, gid, batch, scale_down) -> None:
        cluster = self.cluster
        group = cluster.groups[gid]
        rids = list(batch.request_ids)
        for rid in rids:
            request = cluster.requests[rid]
            request.prefilled = request.input_len
            request.prefill_done_time = self.clock
            request.phase = Phase.DECODING
        self.log.record(
            "prefill_end",
            self.clock,
            group_id=gid,
            group=group.instances,
            requests=rids,
        )
        self._busy.discard(gid)
        if batch.join_group is None:
            self._scale_down(gid, batch, scale_down)
            return
        group.prefilling = [r for r in group.prefilling if r not in rids]
        target = cluster.groups[batch.join_group]
        for rid in rids:
            request = cluster.requests[rid]
            if batch.handoff:
                self._handoff(request, target)
            if batch.first_token:
                request.generated = 1
                if request.is_done:
                    self._finish(request, batch.join_group)
                    continue
            target.batch.request_ids.append(rid)

    def _handoff(self, request: Request, target: ParallelGroup) -> None:
        free = self._free()
        for instance, tokens in request.placement.items():
            free[instance] += tokens
        moved = reactive_migrate(
            dict(request.placement), target.instances, free
        )
        for source, dest, tokens in moved.moves:
            self.cluster.pool.move(request, source, dest, tokens)
        self.log.record(
            "reactive_migration",
            self.clock,
            request=request.id,
            group_id=target.id,
            group=target.instances,
            volume=moved.volume,
            headroom=max(moved.headroom.values(), default=0),
        )

    def _scale_down(self, gid, batch, scale_down) -> None:
        cluster = self.cluster
        group = cluster.groups[gid]
        targets = set(batch.targets or batch.instances)
        lenders = set(batch.lenders.values())
        merge: Set[int] = set()
        released = []
        for instance in list(group.instances):
            lender = cluster.loaned_from.get(instance)
            if instance in targets:
                if lender is not None:
                    del cluster.loaned_from[instance]
                    merge.add(lender)
                continue
            cluster.release_instance(instance)
            released.append(instance)
        group.batch.phase = Phase.DECODING
        merged = [g for g in sorted(merge) if g in cluster.groups]
        survivor = gid
        if merged:
            survivor = cluster.merge_groups([gid, *merged])
            self._busy.discard(survivor)
            self._log.info(
                f"Merged groups {[gid, *merged]} into group {survivor}"
            )
        self.log.record(
            "scale_down",
            self.clock,
            group_id=survivor,
            group=cluster.groups[survivor].instances,
            released=released,
            requests=list(batch.request_ids),
            volume=0 if scale_down is None else scale_down.extra_volume,
            buffer=0 if scale_down is None else scale_down.buffer_tokens,
        )
        for lender in sorted(lenders):
            if lender in cluster.groups and not cluster.is_paused(lender):
                self.log.record(
                    "resume",
                    self.clock,
                    group_id=lender,
                    group=cluster.groups[lender].instances,
                )

    # Decoding

    def _launch_decode(self, step: DecodeStep) -> None:
        cluster = self.cluster
        gid = step.group_id
        group = cluster.groups[gid]
        if step.scale_up:
            for instance in step.scale_up:
                cluster.take_instance(instance, gid)
            self.log.record(
                "scale_up",
                self.clock,
                group_id=gid,
                group=group.instances,
                instances=step.scale_up,
            )
        if step.release:
            for instance in step.release:
                cluster.release_instance(instance)
            self.log.record(
                "release",
                self.clock,
                group_id=gid,
                group=group.instances,
                instances=step.release,
            )
        group.masters = step.masters
        chunk = step.chunk
        if chunk is not None:
            request = cluster.requests[chunk.request_id]
            if chunk.offset == 0:
                self._pending.remove(request.id)
                request.phase = Phase.PREFILL
                request.prefill_start_time = self.clock
                group.prefilling.append(request.id)
                self.log.record(
                    "dispatch",
                    self.clock,
                    group_id=gid,
                    group=group.instances,
                    requests=[request.id],
                )
                self.log.record(
                    "prefill_start",
                    self.clock,
                    group_id=gid,
                    group=group.instances,
                    requests=[request.id],
                )
            cluster.pool.allocate(request, chunk.placement)
        for master, rids in step.assignment.masters.items():
            for rid in rids:
                cluster.pool.allocate(cluster.requests[rid], {master: 1})
        duration = step.duration
        if self.config.charge_overlapped_comm and step.overlapped_volume:
            duration += migration_time(
                step.overlapped_volume,
                self.bandwidth.average(step.masters, step.masters),
            )
        self._busy.add(gid)
        self.log.record(
            "decode_step",
            self.clock,
            group_id=gid,
            group=group.instances,
            requests=list(step.assignment.request_ids),
            masters=step.masters,
            duration=duration,
            volume=step.query_volume,
            overlapped=step.overlapped_volume,
            chunk=None if chunk is None else chunk.tokens,
        )
        self._push(
            self.clock + duration,
            _COMPLETION,
            gid,
            "decode",
            gid,
            step,
            duration,
        )

    def _complete_decode(self, gid, step, duration) -> None:
        cluster = self.cluster
        for rid in step.assignment.request_ids:
            request = cluster.requests[rid]
            request.generated += 1
            request.decode_exec_time += duration
            if request.is_done:
                self._finish(request, gid)
        chunk = step.chunk
        if chunk is not None:
            request = cluster.requests[chunk.request_id]
            group = cluster.groups[gid]
            request.prefilled += chunk.tokens
            if request.prefilled >= request.input_len:
                request.prefill_done_time = self.clock
                request.phase = Phase.DECODING
                group.prefilling.remove(request.id)
                group.batch.request_ids.append(request.id)
                self.log.record(
                    "prefill_end",
                    self.clock,
                    group_id=gid,
                    group=group.instances,
                    requests=[request.id],
                )
        self._busy.discard(gid)
        self._drop_if_empty(gid)

    # Progress

    def _break_deadlock(self) -> None:
        """Free memory when nothing runs and nothing can start.

        The latest-arrived request of an idle group is evicted and
        requeued for recomputation. Without such a request the head of
        the queue can never be served.

        """
        cluster = self.cluster
        candidates = []
        for gid, group in cluster.groups.items():
            if gid in self._busy:
                continue
            for rid in [*group.request_ids, *group.prefilling]:
                candidates.append((cluster.requests[rid], gid))
        if candidates:
            request, gid = max(
                candidates, key=lambda c: (c[0].arrival_time, c[0].id)
            )
            group = cluster.groups[gid]
            cluster.pool.free(request)
            if request.id in group.prefilling:
                group.prefilling.remove(request.id)
            else:
                group.batch.request_ids.remove(request.id)
            request.reset()
            self._requeue(request)
            self.log.record(
                "evict",
                self.clock,
                request=request.id,
                group_id=gid,
                group=group.instances,
            )
            self._log.info(
                f"Evicted request {request.id} from group {gid} to free "
                f"KV memory"
            )
            self._drop_if_empty(gid)
            return
        if self._pending:
            head = cluster.requests[self._pending[0]]
            self._oversized(head, "cannot be scheduled on an empty cluster")
            return
        raise_error(
            "The simulation stalled with unfinished requests",
            klass=RuntimeError,
        )
