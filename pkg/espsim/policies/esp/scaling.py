"""Provide scaling plans for prefill batches and decoding groups."""

# Authors: The espsim developers
# License: AGPL

import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Sequence

from ...mechanisms import ScaleDownPlan, decode_step_comm, fill_descending
from ...utils import logger, raise_error
from ...utils.exceptions import InfeasiblePlanError, NoCapacityError
from ..base import (
    DecodeStep,
    DecodingBatchView,
    SchedulerState,
    choose_masters,
)
from .batching import BatchPlan


__all__ = [
    "ScalingPlan",
    "plan_scale_down",
    "plan_decode_step",
    "make_scaling_plan",
]


@dataclass
class ScalingPlan:
    """Scaling decisions of one scheduling point.

    Parameters
    ----------
    prefill : list of ScaleDownPlan
        Scale-down plan of each prefill batch, in batch order.
    decode : list of DecodeStep
        Next step of each decoding group that can run.
    stalled : list of int
        Decoding groups that cannot place their next tokens.

    """

    prefill: List[ScaleDownPlan] = field(default_factory=list)
    decode: List[DecodeStep] = field(default_factory=list)
    stalled: List[int] = field(default_factory=list)


def plan_scale_down(
    lengths: Mapping[int, int],
    instances: Sequence[int],
    free: Mapping[int, int],
) -> ScaleDownPlan:
    """Shrink a prefill batch to the fewest instances that hold its KV.

    Parameters
    ----------
    lengths : mapping of int to int
        KV tokens per request of the batch.
    instances : sequence of int
        Instances running the prefill.
    free : mapping of int to int
        Free slots of those instances.

    Returns
    -------
    ScaleDownPlan
        Plan keeping the instances with the most free slots, filled in
        descending free order.

    Raises
    ------
    InfeasiblePlanError
        If the batch exceeds the free slots of all its instances.

    """
    ranked = sorted(instances, key=lambda i: (-free[i], i))
    total = sum(lengths.values())
    kept = 0
    covered = 0
    for kept, instance in enumerate(ranked, start=1):
        covered += free[instance]
        if covered >= total:
            break
    if covered < total:
        raise_error(
            f"Batch of {total} tokens exceeds {covered} free slots on "
            f"{list(instances)}",
            klass=InfeasiblePlanError,
        )
    target = ranked[:kept]
    placement = fill_descending(lengths, {i: free[i] for i in target})
    return ScaleDownPlan(
        source=tuple(instances),
        target=tuple(target),
        placement=placement,
        lengths=dict(lengths),
    )


def plan_decode_step(
    state: SchedulerState,
    view: DecodingBatchView,
    idle: List[int],
    free: Dict[int, int],
) -> DecodeStep:
    """Plan the next decoding step of a group.

    A batch past the compute-bound threshold gets one master per
    threshold-sized share. More masters are added while the balanced
    assignment does not fit the masters' free slots; when the members run
    out, idle instances join (taken from ``idle``). Members holding none of
    the batch's KV that are not masters leave the group.

    Parameters
    ----------
    state : SchedulerState
        The scheduler state.
    view : DecodingBatchView
        The decoding group.
    idle : list of int
        Idle instances still available; scale-ups are removed from it.
    free : dict of int to int
        Free slots per instance.

    Returns
    -------
    DecodeStep
        The step.

    Raises
    ------
    NoCapacityError
        If the next tokens cannot be placed and no idle instance can help.

    """
    rids = list(view.request_ids)
    threshold = state.sib.decode.threshold
    minimum = math.ceil(len(rids) / threshold) if len(rids) > threshold else 1
    members = list(view.instances)
    scale_up: List[int] = []
    while True:
        assignment = choose_masters(rids, members, free, minimum)
        if assignment is not None and len(assignment.masters) >= minimum:
            break
        if not (state.enable_scale_up and idle):
            if assignment is not None:
                break
            idle.extend(scale_up)
            raise_error(
                f"Group {view.group_id} cannot place {len(rids)} new tokens "
                "and no idle instance is left",
                klass=NoCapacityError,
            )
        joining = min(idle, key=lambda i: (-free[i], i))
        idle.remove(joining)
        members.append(joining)
        scale_up.append(joining)
    held = state.cluster.group_tokens(view.group_id)
    release = [
        i
        for i in members
        if held[i] == 0 and i not in assignment.masters and i not in scale_up
    ]
    remaining = [i for i in members if i not in release]
    resident = int(held.sum())
    duration = state.sib.decode_time(
        len(rids), resident, len(remaining), len(assignment.masters)
    )
    comm = decode_step_comm(remaining, assignment, free)
    if scale_up:
        logger.debug(f"Group {view.group_id} scales up onto {scale_up}")
    return DecodeStep(
        group_id=view.group_id,
        assignment=assignment,
        duration=duration,
        scale_up=scale_up,
        release=release,
        query_volume=comm.query_volume,
        overlapped_volume=comm.overlappable_volume,
    )


def make_scaling_plan(
    state: SchedulerState,
    batches: Sequence[BatchPlan],
    free: Mapping[int, int],
    idle: List[int],
    skip_groups: Sequence[int] = (),
) -> ScalingPlan:
    """Generate the scaling plans of one scheduling point.

    Parameters
    ----------
    state : SchedulerState
        The scheduler state.
    batches : sequence of BatchPlan
        The prefill batches.
    free : mapping of int to int
        Free slots of the prefill instances once migrations are done.
    idle : list of int
        Idle instances left for decoding scale-ups.
    skip_groups : sequence of int, optional
        Decoding groups that do not run this time (default empty).

    Returns
    -------
    ScalingPlan
        The plans.

    """
    plan = ScalingPlan()
    for batch in batches:
        lengths = {
            rid: state.request(rid).input_len for rid in batch.request_ids
        }
        plan.prefill.append(plan_scale_down(lengths, batch.instances, free))
    current = state.free()
    for view in state.decoding_batches(ready_only=True):
        if view.group_id in skip_groups:
            continue
        try:
            step = plan_decode_step(state, view, idle, current)
        except NoCapacityError:
            plan.stalled.append(view.group_id)
            continue
        plan.decode.append(step)
    return plan
