"""Provide instance allocation for a dispatched prefill."""

# Authors: The espsim developers
# License: AGPL

from dataclasses import dataclass, field
from typing import Dict, List, Optional

from ...costmodel import migration_time
from ...utils import logger, raise_error
from ...utils.exceptions import InfeasibleError
from ..base import Migration, SchedulerState
from .dispatch import DispatchResult, prefill_strategy


__all__ = ["Allocation", "allocate_instances"]


@dataclass
class Allocation:
    """Instances of the next prefill and how they were obtained.

    Parameters
    ----------
    instances : list of int
        The allocated instances.
    free : dict of int to int
        Free slots of each allocated instance once migrations are done.
    migrations : list of Migration
        KV moved off instances taken from decoding groups.
    shrunk : dict of int to list of int
        Instances each decoding group hands over after migrating.
    preempted : dict of int to list of int
        Instances of paused decoding groups.

    """

    instances: List[int] = field(default_factory=list)
    free: Dict[int, int] = field(default_factory=dict)
    migrations: List[Migration] = field(default_factory=list)
    shrunk: Dict[int, List[int]] = field(default_factory=dict)
    preempted: Dict[int, List[int]] = field(default_factory=dict)

    def migrations_off(self, instance: int) -> List[Migration]:
        """Get the migrations that empty ``instance``."""
        return [m for m in self.migrations if m.source == instance]


class _GroupSlots:
    """Mutable view of the decoding groups allocation may draw on."""

    def __init__(self, state: SchedulerState, gids: List[int]) -> None:
        self.state = state
        self.free = state.free()
        self.members = {
            gid: list(state.cluster.groups[gid].instances) for gid in gids
        }
        self.held = {
            gid: {
                rid: dict(state.request(rid).placement)
                for rid in state.cluster.groups[gid].request_ids
            }
            for gid in gids
        }

    def volume(self, gid: int, instance: int) -> int:
        return sum(p.get(instance, 0) for p in self.held[gid].values())

    def shrink(self, gid: int, instance: int) -> Optional[List[Migration]]:
        """Move the group's KV off ``instance`` onto its other members."""
        others = [i for i in self.members[gid] if i != instance]
        volume = self.volume(gid, instance)
        if not others or sum(self.free[i] for i in others) < volume:
            return None
        migrations = []
        for rid in sorted(self.held[gid]):
            placement = self.held[gid][rid]
            left = placement.pop(instance, 0)
            while left > 0:
                target = min(others, key=lambda i: (-self.free[i], i))
                take = min(left, self.free[target])
                migrations.append(Migration(rid, instance, target, take))
                placement[target] = placement.get(target, 0) + take
                self.free[target] -= take
                left -= take
        self.free[instance] += volume
        self.members[gid].remove(instance)
        return migrations


def allocate_instances(
    state: SchedulerState, dispatched: DispatchResult
) -> Allocation:
    """Allocate instances to the dispatched requests.

    Allocation starts from the idle instances. While their free slots are
    short of the prompts, the instance with the most free slots among the
    decoding groups the dispatch drew on is taken over: its KV migrates to
    the other members of its group, or, when they cannot hold it, the whole
    group pauses and lends its instances. The active instance holding the
    fewest tokens is then added while the prefill speed-up per prompt token
    beats the time to migrate its KV.

    Parameters
    ----------
    state : SchedulerState
        The scheduler state.
    dispatched : DispatchResult
        Output of :func:`dispatch`.

    Returns
    -------
    Allocation
        The instances and the migrations.

    Raises
    ------
    InfeasibleError
        If even pausing every drawn-on group leaves the prompts short.

    """
    requests = [state.request(rid) for rid in dispatched.request_ids]
    if not requests:
        raise_error("Cannot allocate instances to an empty prefill")
    need = sum(r.input_len for r in requests)
    ready = [v.group_id for v in state.decoding_batches(ready_only=True)]
    slots = _GroupSlots(state, ready)
    alloc = Allocation(instances=list(dispatched.instances))

    def short() -> bool:
        return sum(slots.free[i] for i in alloc.instances) < need

    extensions = [g for g in sorted(dispatched.extensions) if g in ready]
    while short():
        candidates = [
            (-slots.free[i], i, gid)
            for gid in extensions
            if gid not in alloc.preempted
            for i in slots.members[gid]
        ]
        if not candidates:
            raise_error(
                f"Cannot gather {need} free slots for requests "
                f"{dispatched.request_ids}",
                klass=InfeasibleError,
            )
        _, instance, gid = min(candidates)
        migrations = slots.shrink(gid, instance)
        if migrations is not None:
            alloc.instances.append(instance)
            alloc.shrunk.setdefault(gid, []).append(instance)
            alloc.migrations.extend(migrations)
        else:
            alloc.preempted[gid] = list(slots.members[gid])
            alloc.instances.extend(slots.members[gid])
            slots.members[gid] = []

    lengths = [r.input_len for r in requests]
    sib = state.sib
    skip = set()
    while len(alloc.instances) < sib.max_sp:
        candidates = [
            (slots.volume(gid, i), i, gid)
            for gid in ready
            if gid not in alloc.preempted and len(slots.members[gid]) > 1
            for i in slots.members[gid]
            if i not in skip
        ]
        if not candidates:
            break
        volume, instance, gid = min(candidates)
        n = len(alloc.instances)
        saved = sib.prefill_time(
            lengths, prefill_strategy(sib, n)
        ) - sib.prefill_time(lengths, prefill_strategy(sib, n + 1))
        others = [i for i in slots.members[gid] if i != instance]
        bandwidth = state.bandwidth.average([instance], others)
        delay = migration_time(volume, bandwidth)
        gain = sum(saved / r.input_len for r in requests)
        cost = sum(delay / r.input_len for r in requests)
        if gain <= cost:
            break
        migrations = slots.shrink(gid, instance)
        if migrations is None:
            skip.add(instance)
            continue
        logger.debug(
            f"Adding instance {instance} of group {gid}: gain {gain} vs "
            f"cost {cost}"
        )
        alloc.instances.append(instance)
        alloc.shrunk.setdefault(gid, []).append(instance)
        alloc.migrations.extend(migrations)
    alloc.free = {i: int(slots.free[i]) for i in alloc.instances}
    if sum(alloc.free.values()) < need:
        raise_error(
            f"Allocated instances hold {sum(alloc.free.values())} free "
            f"slots, {need} needed",
            klass=InfeasibleError,
        )
    return alloc
