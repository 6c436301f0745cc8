"""Provide the elastic sequence parallelism scheduling policy."""

# Authors: The espsim developers
# License: AGPL

from typing import Any, Dict, List, Optional

from ...api.decorators import register_policy
from ...costmodel import ScalingInfoBase, Strategy
from ...utils import logger
from ...utils.exceptions import InfeasibleError
from ..base import (
    BasePolicy,
    PrefillBatch,
    ScheduleDecision,
    SchedulerState,
)
from .allocation import Allocation, allocate_instances
from .batching import DPTable, batch_dp
from .dispatch import dispatch
from .scaling import make_scaling_plan


__all__ = ["ESPPolicy", "schedule_iteration"]


def _trim(alloc: Allocation, used: set) -> Allocation:
    """Drop instances no batch ended up using."""
    shrunk = {
        gid: [i for i in insts if i in used]
        for gid, insts in alloc.shrunk.items()
    }
    preempted = {
        gid: [i for i in insts if i in used]
        for gid, insts in alloc.preempted.items()
    }
    return Allocation(
        instances=[i for i in alloc.instances if i in used],
        free={i: f for i, f in alloc.free.items() if i in used},
        migrations=[m for m in alloc.migrations if m.source in used],
        shrunk={g: insts for g, insts in shrunk.items() if insts},
        preempted={g: insts for g, insts in preempted.items() if insts},
    )


def schedule_iteration(
    state: SchedulerState,
) -> ScheduleDecision:
    """Run dispatch, allocation, batching and scaling in order.

    Parameters
    ----------
    state : SchedulerState
        The scheduler state.

    Returns
    -------
    ScheduleDecision
        The composed decision; it may be empty.

    """
    decision = ScheduleDecision()
    idle = state.idle()
    dispatched = dispatch(state)
    table: Optional[DPTable] = None
    alloc: Optional[Allocation] = None
    if dispatched.request_ids:
        try:
            alloc = allocate_instances(state, dispatched)
            lengths = {
                rid: state.request(rid).input_len
                for rid in dispatched.request_ids
            }
            table = batch_dp(
                lengths,
                alloc.instances,
                alloc.free,
                state.sib,
                instances_per_node=state.cluster.instances_per_node,
                bounds=state.dp_bounds,
            )
        except InfeasibleError as e:
            logger.debug(f"Prefill not launched: {e}")
            alloc, table = None, None
    batches = [] if table is None else table.batches
    if alloc is not None:
        used = {i for b in batches for i in b.instances}
        alloc = _trim(alloc, used)
        idle = [i for i in idle if i not in used]
        decision.migrations = list(alloc.migrations)
        decision.shrunk = alloc.shrunk
        decision.preempted = alloc.preempted
    skip = set(decision.shrunk) | set(decision.preempted)
    free = alloc.free if alloc is not None else {}
    plan = make_scaling_plan(state, batches, free, idle, skip_groups=skip)
    lenders = {
        i: gid for gid, insts in decision.preempted.items() for i in insts
    }
    for batch, scale_down in zip(batches, plan.prefill):
        strategy = Strategy(batch.dop, 1)
        lengths = [state.request(r).input_len for r in batch.request_ids]
        decision.prefill.append(
            PrefillBatch(
                request_ids=list(batch.request_ids),
                instances=list(batch.instances),
                strategy=strategy,
                duration=state.sib.prefill_time(lengths, strategy),
                placement=scale_down.placement,
                targets=list(scale_down.target),
                lenders={
                    i: lenders[i] for i in batch.instances if i in lenders
                },
            )
        )
    decision.decode = plan.decode
    decision.stalled = plan.stalled
    return decision


@register_policy
class ESPPolicy(BasePolicy):
    """Elastic sequence parallelism.

    Every scheduling point dispatches pending requests, gathers instances
    for them, splits them into batches of their own DoP and plans how
    prefill groups shrink and decoding groups grow.

    """

    name = "esp"

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
        return schedule_iteration(state)

    def strategies(
        self, sib: ScalingInfoBase, n_instances: int
    ) -> List[Strategy]:
        """Get the sequence-parallel strategies up to the cluster size."""
        return [
            Strategy(d, 1)
            for d in range(1, n_instances + 1)
            if sib.has(Strategy(d, 1))
        ]

    def get_params(self) -> Dict[str, Any]:
        """Get the constructor parameters of the policy."""
        return {}
