"""Provide proactive scale-down and the reactive-migration baseline."""

# Authors: The espsim developers
# License: AGPL

from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np

from ..utils import logger, raise_error
from ..utils.exceptions import InfeasibleHeadroomError, InfeasiblePlanError
from .ring import RingSchedule


__all__ = [
    "ScaleDownPlan",
    "ScaleDownResult",
    "ReactiveMigration",
    "fill_descending",
    "even_split",
    "proactive_scale_down",
    "reactive_migrate",
]


def fill_descending(
    lengths: Mapping[int, int], free: Mapping[int, int]
) -> Dict[int, Dict[int, int]]:
    """Place requests by filling instances in descending free order.

    Instances are sorted by free slots (descending, ties by id) and filled
    one after the other; requests are laid out in the given order, so a
    request may straddle two instances.

    Parameters
    ----------
    lengths : mapping of int to int
        Tokens to place per request id.
    free : mapping of int to int
        Free slots per candidate instance.

    Returns
    -------
    dict of int to dict
        Placement per request.

    Raises
    ------
    InfeasiblePlanError
        If the instances cannot hold every token.

    """
    order = sorted(free, key=lambda i: (-free[i], i))
    remaining = {i: int(free[i]) for i in order}
    placement: Dict[int, Dict[int, int]] = {}
    cursor = 0
    for rid, tokens in lengths.items():
        share: Dict[int, int] = {}
        left = int(tokens)
        while left > 0:
            if cursor >= len(order):
                raise_error(
                    f"{sum(lengths.values())} tokens do not fit into "
                    f"{sum(free.values())} free slots",
                    klass=InfeasiblePlanError,
                )
            instance = order[cursor]
            take = min(left, remaining[instance])
            if take > 0:
                share[instance] = share.get(instance, 0) + take
                remaining[instance] -= take
                left -= take
            if remaining[instance] == 0:
                cursor += 1
        placement[rid] = share
    return placement


def even_split(total: int, instances: Sequence[int]) -> Dict[int, int]:
    """Split ``total`` tokens evenly, the remainder to the first instances.

    Parameters
    ----------
    total : int
        Tokens to split.
    instances : sequence of int
        The instances.

    Returns
    -------
    dict of int to int
        Tokens per instance.

    """
    if not instances:
        raise_error("Cannot split tokens over zero instances")
    base, extra = divmod(int(total), len(instances))
    return {
        inst: base + (1 if k < extra else 0)
        for k, inst in enumerate(instances)
    }


@dataclass(frozen=True)
class ScaleDownPlan:
    """Target placement of a group that shrinks after prefill.

    Parameters
    ----------
    source : tuple of int
        Instances of the prefill group.
    target : tuple of int
        Instances kept for decoding, a subset of ``source``.
    placement : dict of int to dict
        Target KV placement per request id.
    lengths : dict of int to int
        Full KV tokens of every request.

    """

    source: Tuple[int, ...]
    target: Tuple[int, ...]
    placement: Dict[int, Dict[int, int]]
    lengths: Dict[int, int]

    def __post_init__(self) -> None:
        if len(self.target) < 1:
            raise_error("A scale-down plan keeps at least one instance")
        if len(self.target) > len(self.source):
            raise_error(
                f"Cannot scale down from {len(self.source)} to "
                f"{len(self.target)} instances"
            )
        if not set(self.target) <= set(self.source):
            raise_error(
                f"Target instances {sorted(self.target)} are not a subset "
                f"of the source group {sorted(self.source)}"
            )
        if set(self.placement) != set(self.lengths):
            raise_error("Plan placement and lengths cover different requests")
        for rid, share in self.placement.items():
            if not set(share) <= set(self.target):
                raise_error(
                    f"Plan places request {rid} outside the target group"
                )
            if sum(share.values()) != self.lengths[rid]:
                raise_error(
                    f"Plan places {sum(share.values())} tokens of request "
                    f"{rid}, expected {self.lengths[rid]}"
                )

    def per_instance(self) -> Dict[int, int]:
        """Total planned tokens on each target instance."""
        totals = {i: 0 for i in self.target}
        for share in self.placement.values():
            for instance, tokens in share.items():
                totals[instance] += tokens
        return totals


@dataclass(frozen=True)
class ScaleDownResult:
    """Outcome of a proactive scale-down.

    Parameters
    ----------
    placement : dict of int to dict
        Final placement per request.
    extra_volume : int
        Tokens moved on top of the ring traffic.
    buffer_tokens : int
        Largest transient block an instance buffers in one round.
    retained : numpy.ndarray
        Tokens each ring position keeps from each origin segment.

    """

    placement: Dict[int, Dict[int, int]]
    extra_volume: int
    buffer_tokens: int
    retained: np.ndarray = field(repr=False)


def proactive_scale_down(
    schedule: RingSchedule,
    plan: ScaleDownPlan,
    free: Mapping[int, int],
) -> ScaleDownResult:
    """Retain KV during the ring pass so the group ends on its target.

    Each target instance keeps tokens of the blocks passing through it until
    its planned share is met. Since every instance sees every segment,
    retention needs no traffic beyond the ring itself.

    Parameters
    ----------
    schedule : RingSchedule
        The ring pass of the prefill group.
    plan : ScaleDownPlan
        The target placement.
    free : mapping of int to int
        Free slots of each target instance before the batch's KV lands.

    Returns
    -------
    ScaleDownResult
        The final placement, equal to the plan.

    Raises
    ------
    InfeasiblePlanError
        If a target instance lacks free slots for its share.

    """
    if set(schedule.instances) != set(plan.source):
        raise_error(
            f"Ring over {sorted(schedule.instances)} does not cover the "
            f"plan's source group {sorted(plan.source)}"
        )
    if sum(schedule.segments) != sum(plan.lengths.values()):
        raise_error(
            f"Ring carries {sum(schedule.segments)} tokens but the plan "
            f"places {sum(plan.lengths.values())}"
        )
    need = plan.per_instance()
    for instance, tokens in need.items():
        if tokens > free.get(instance, 0):
            raise_error(
                f"Instance {instance} has {free.get(instance, 0)} free "
                f"slots but the plan keeps {tokens} tokens on it",
                klass=InfeasiblePlanError,
            )
    d = schedule.dop
    position = {inst: i for i, inst in enumerate(schedule.instances)}
    unclaimed = np.array(schedule.segments, dtype=np.int64)
    retained = np.zeros((d, d), dtype=np.int64)
    remaining = {position[i]: t for i, t in need.items()}
    for r in range(d):
        for i, origin in enumerate(schedule.held_at(r)):
            if remaining.get(i, 0) == 0:
                continue
            o = position[origin]
            take = min(remaining[i], int(unclaimed[o]))
            retained[i, o] += take
            unclaimed[o] -= take
            remaining[i] -= take
    if unclaimed.any():
        raise_error(
            f"Ring retention left {int(unclaimed.sum())} tokens unplaced",
            klass=RuntimeError,
        )
    buffer_tokens = max(schedule.segments) if d > 1 else 0
    logger.debug(
        f"Scale down {list(plan.source)} -> {list(plan.target)} with "
        f"buffer {buffer_tokens}"
    )
    return ScaleDownResult(
        placement={rid: dict(s) for rid, s in plan.placement.items()},
        extra_volume=0,
        buffer_tokens=buffer_tokens,
        retained=retained,
    )


@dataclass(frozen=True)
class ReactiveMigration:
    """Outcome of migrating KV after prefill.

    Parameters
    ----------
    placement : dict of int to int
        Final tokens per target instance.
    volume : int
        Tokens that left non-target instances.
    headroom : dict of int to int
        Slots each source instance needed before migrating.
    moves : list of (int, int, int)
        ``(source, target, tokens)`` transfers.

    """

    placement: Dict[int, int]
    volume: int
    headroom: Dict[int, int]
    moves: List[Tuple[int, int, int]]


def reactive_migrate(
    placement: Mapping[int, int],
    targets: Sequence[int],
    free: Mapping[int, int],
) -> ReactiveMigration:
    """Move KV of a finished prefill onto ``targets``.

    Every source instance first has to hold its full share of the prefill
    output; tokens on instances outside ``targets`` are then shipped to the
    targets with the most free slots.

    Parameters
    ----------
    placement : mapping of int to int
        Tokens each source instance holds after prefill.
    targets : sequence of int
        Instances that keep the KV.
    free : mapping of int to int
        Free slots per instance before the prefill output lands.

    Returns
    -------
    ReactiveMigration
        The final placement and the moved volume.

    Raises
    ------
    InfeasibleHeadroomError
        If a source instance cannot hold its share.
    InfeasiblePlanError
        If the targets cannot receive the moved tokens.

    """
    if not targets:
        raise_error("Reactive migration needs at least one target")
    headroom = {int(i): int(t) for i, t in placement.items() if t > 0}
    for instance in sorted(headroom):
        if free.get(instance, 0) < headroom[instance]:
            raise_error(
                f"Instance {instance} needs {headroom[instance]} free slots "
                f"to hold its share but has {free.get(instance, 0)}",
                klass=InfeasibleHeadroomError,
            )
    final = {int(t): headroom.get(int(t), 0) for t in targets}
    # Free slots of each target once its own share has landed
    spare = {t: int(free.get(t, 0)) - final[t] for t in final}
    moves: List[Tuple[int, int, int]] = []
    volume = 0
    for source in sorted(headroom):
        if source in final:
            continue
        left = headroom[source]
        for target in sorted(spare, key=lambda t: (-spare[t], t)):
            if left == 0:
                break
            take = min(left, spare[target])
            if take <= 0:
                continue
            moves.append((source, target, take))
            spare[target] -= take
            final[target] += take
            left -= take
        if left > 0:
            raise_error(
                f"Targets {sorted(final)} cannot receive {left} tokens "
                f"from instance {source}",
                klass=InfeasiblePlanError,
            )
        volume += headroom[source]
    return ReactiveMigration(
        placement={t: n for t, n in final.items() if n > 0},
        volume=volume,
        headroom=headroom,
        moves=moves,
    )
