"""Provide the mutable cluster state shared by engine and policies."""

# Authors: The espsim developers
# License: AGPL

from typing import Dict, Iterable, List, Optional

import numpy as np

from ..utils import raise_error
from .group import Batch, ParallelGroup
from .pool import KVCachePool
from .request import Phase, Request


__all__ = ["ClusterState"]


class ClusterState:
    """Instances, groups, requests and the KV pool of one cluster.

    An instance is idle when no group owns it. A running group can borrow
    instances of a paused decoding group; ``loaned_from`` remembers the
    lender until the instance is handed back or the groups merge.

    Parameters
    ----------
    pool : KVCachePool
        The KV-cache pool.
    instances_per_node : int, optional
        Instances sharing one node (default 8).

    """

    def __init__(self, pool: KVCachePool, instances_per_node: int = 8) -> None:
        if instances_per_node < 1:
            raise_error("instances_per_node must be >= 1")
        self.pool = pool
        self.instances_per_node = instances_per_node
        self.requests: Dict[int, Request] = {}
        self.groups: Dict[int, ParallelGroup] = {}
        self.owner: List[Optional[int]] = [None] * pool.n_instances
        self.loaned_from: Dict[int, int] = {}
        self._next_group = 0

    @property
    def n_instances(self) -> int:
        """Number of instances."""
        return self.pool.n_instances

    def node_of(self, instance: int) -> int:
        """Get the node index of ``instance``."""
        return instance // self.instances_per_node

    def new_group_id(self) -> int:
        """Get a fresh group id."""
        gid = self._next_group
        self._next_group += 1
        return gid

    def idle_instances(self) -> List[int]:
        """Get instances not owned by any group."""
        return [i for i, owner in enumerate(self.owner) if owner is None]

    def add_group(self, group: ParallelGroup) -> None:
        """Register ``group`` and take ownership of its instances.

        Parameters
        ----------
        group : ParallelGroup
            The group to add.

        Raises
        ------
        RuntimeError
            If one of its instances is already owned.

        """
        for instance in group.instances:
            if self.owner[instance] is not None:
                raise_error(
                    f"Instance {instance} already belongs to group "
                    f"{self.owner[instance]}",
                    klass=RuntimeError,
                )
        for instance in group.instances:
            self.owner[instance] = group.id
        self.groups[group.id] = group
        self._next_group = max(self._next_group, group.id + 1)

    def remove_group(self, gid: int) -> ParallelGroup:
        """Drop group ``gid`` and free its instances."""
        group = self.groups.pop(gid)
        for instance in group.instances:
            if self.owner[instance] == gid:
                self.owner[instance] = None
        return group

    def take_instance(self, instance: int, gid: int) -> None:
        """Hand ``instance`` over to group ``gid``."""
        previous = self.owner[instance]
        if previous is not None and previous != gid:
            lender = self.groups[previous]
            lender.instances = [i for i in lender.instances if i != instance]
            lender.masters = [i for i in lender.masters if i != instance]
        self.owner[instance] = gid
        group = self.groups[gid]
        if instance not in group.instances:
            group.instances.append(instance)

    def release_instance(self, instance: int) -> None:
        """Return ``instance`` to its lender or to the idle set."""
        current = self.owner[instance]
        if current is not None and current in self.groups:
            group = self.groups[current]
            group.instances = [i for i in group.instances if i != instance]
            group.masters = [i for i in group.masters if i != instance]
        lender = self.loaned_from.pop(instance, None)
        if lender is not None and lender in self.groups:
            self.owner[instance] = lender
            self.groups[lender].instances.append(instance)
        else:
            self.owner[instance] = None

    def merge_groups(self, gids: List[int]) -> int:
        """Merge decoding groups into the one with the smallest id.

        Instances, masters and batches are united; instances lent out by a
        merged group are then owed to the survivor.

        Parameters
        ----------
        gids : list of int
            Groups to merge.

        Returns
        -------
        int
            Id of the surviving group.

        """
        gids = sorted(set(gids))
        if not gids:
            raise_error("Nothing to merge")
        survivor = self.groups[gids[0]]
        for gid in gids[1:]:
            group = self.groups.pop(gid)
            for instance in group.instances:
                self.owner[instance] = survivor.id
                survivor.instances.append(instance)
            survivor.masters.extend(group.masters)
            if group.batch is not None:
                if survivor.batch is None:
                    survivor.batch = Batch(survivor.id, [])
                survivor.batch.request_ids.extend(group.batch.request_ids)
            for instance, lender in self.loaned_from.items():
                if lender == gid:
                    self.loaned_from[instance] = survivor.id
        return survivor.id

    def is_paused(self, gid: int) -> bool:
        """Whether some instance of group ``gid`` is lent out."""
        return gid in self.loaned_from.values()

    def group_tokens(self, gid: int) -> np.ndarray:
        """Get per-instance KV tokens held by the batch of group ``gid``."""
        tokens = np.zeros(self.n_instances, dtype=np.int64)
        for rid in self.groups[gid].request_ids:
            for instance, count in self.requests[rid].placement.items():
                tokens[instance] += count
        return tokens

    def live_requests(self) -> List[Request]:
        """Get requests that currently hold or will hold KV."""
        return [
            r
            for r in self.requests.values()
            if r.phase in (Phase.PREFILL, Phase.DECODING)
        ]

    def holders(self) -> Iterable[Request]:
        """Get requests with a non-empty placement."""
        return (r for r in self.requests.values() if r.placement)

    def check_invariants(self) -> None:
        """Check KV conservation, overflow and group disjointness.

        Raises
        ------
        RuntimeError
            If any invariant is violated.

        """
        self.pool.check(self.holders())
        seen: Dict[int, int] = {}
        for gid, group in self.groups.items():
            if len(set(group.instances)) != len(group.instances):
                raise_error(
                    f"Group {gid} lists an instance twice: {group.instances}",
                    klass=RuntimeError,
                )
            for instance in group.instances:
                if instance in seen:
                    raise_error(
                        f"Instance {instance} is in groups {seen[instance]} "
                        f"and {gid}",
                        klass=RuntimeError,
                    )
                seen[instance] = gid
                if self.owner[instance] != gid:
                    raise_error(
                        f"Instance {instance} listed in group {gid} but "
                        f"owned by {self.owner[instance]}",
                        klass=RuntimeError,
                    )
            if not set(group.masters) <= set(group.instances):
                raise_error(
                    f"Masters {group.masters} of group {gid} are not members",
                    klass=RuntimeError,
                )
        for instance, owner in enumerate(self.owner):
            if owner is not None and instance not in seen:
                raise_error(
                    f"Instance {instance} owned by missing group {owner}",
                    klass=RuntimeError,
                )
