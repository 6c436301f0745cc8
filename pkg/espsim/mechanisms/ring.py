"""Provide the striped ring schedule of sequence-parallel prefill."""

# Authors: The espsim developers
# License: AGPL

from dataclasses import dataclass
from typing import Mapping, Sequence, Tuple

import numpy as np

from ..utils import raise_error


__all__ = ["RingTransfer", "RingSchedule", "build_ring_schedule"]


@dataclass(frozen=True)
class RingTransfer:
    """One KV block hop between ring neighbours.

    Parameters
    ----------
    sender : int
        Instance sending the block.
    receiver : int
        Instance receiving the block.
    origin : int
        Instance whose KV segment the block is.
    volume : int
        Tokens in the block.

    """

    sender: int
    receiver: int
    origin: int
    volume: int


@dataclass(frozen=True)
class RingSchedule:
    """Rounds of a ring pass over one parallel group.

    Round 0 computes on local KV. In round ``r`` the instance at position
    ``i`` forwards the block it holds to position ``(i + 1) % d``, so after
    ``d`` rounds every instance has seen every KV segment once.

    Parameters
    ----------
    instances : tuple of int
        Ring order of the group.
    segments : tuple of int
        Initial KV tokens at each position.
    rounds : tuple of tuple of RingTransfer
        Transfers of each round.

    """

    instances: Tuple[int, ...]
    segments: Tuple[int, ...]
    rounds: Tuple[Tuple[RingTransfer, ...], ...]

    @property
    def dop(self) -> int:
        """Instances in the ring."""
        return len(self.instances)

    @property
    def total_volume(self) -> int:
        """Tokens sent between instances over all rounds."""
        return sum(t.volume for rnd in self.rounds for t in rnd)

    def held_at(self, round_index: int) -> Tuple[int, ...]:
        """Get the origin of the block each position holds in a round.

        Parameters
        ----------
        round_index : int
            The round, from 0 to ``dop - 1``.

        Returns
        -------
        tuple of int
            Origin instance per ring position.

        """
        d = self.dop
        return tuple(
            self.instances[(i - round_index) % d] for i in range(d)
        )

    def coverage(self) -> np.ndarray:
        """Count how often each instance meets each KV segment.

        Returns
        -------
        numpy.ndarray
            ``(d, d)`` array, rows are query instances and columns segment
            origins, both in ring order.

        """
        d = self.dop
        position = {inst: i for i, inst in enumerate(self.instances)}
        counts = np.zeros((d, d), dtype=np.int64)
        for r in range(d):
            for i, origin in enumerate(self.held_at(r)):
                counts[i, position[origin]] += 1
        return counts

    def received(self, instance: int) -> int:
        """Tokens ``instance`` receives over the whole pass."""
        return sum(
            t.volume
            for rnd in self.rounds
            for t in rnd
            if t.receiver == instance
        )


def build_ring_schedule(
    instances: Sequence[int], placement: Mapping[int, int]
) -> RingSchedule:
    """Build the ring pass of a group.

    Parameters
    ----------
    instances : sequence of int
        The group in ring order.
    placement : mapping of int to int
        KV tokens of the batch on each instance; instances of the group
        that are missing hold nothing.

    Returns
    -------
    RingSchedule
        The schedule; its inter-instance volume is ``(d - 1)`` times the
        total tokens.

    """
    instances = tuple(int(i) for i in instances)
    if not instances:
        raise_error("A ring needs at least one instance")
    if len(set(instances)) != len(instances):
        raise_error(f"Ring instances must be distinct: {instances}")
    outside = set(placement) - set(instances)
    if outside:
        raise_error(
            f"Placement uses instances {sorted(outside)} outside the ring"
        )
    segments = tuple(int(placement.get(i, 0)) for i in instances)
    d = len(instances)
    rounds = [()]
    for r in range(1, d):
        transfers = []
        for i in range(d):
            # Position i forwards the block it held in the previous round
            origin = (i - r + 1) % d
            transfers.append(
                RingTransfer(
                    sender=instances[i],
                    receiver=instances[(i + 1) % d],
                    origin=instances[origin],
                    volume=segments[origin],
                )
            )
        rounds.append(tuple(transfers))
    return RingSchedule(
        instances=instances, segments=segments, rounds=tuple(rounds)
    )
