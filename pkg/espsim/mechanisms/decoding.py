"""Provide single- and multi-master distributed decoding."""

# Authors: The espsim developers
# License: AGPL

from dataclasses import dataclass
from typing import Dict, Iterable, Mapping, Sequence, Tuple

from ..utils import raise_error
from ..utils.exceptions import MasterFullError


__all__ = [
    "MasterAssignment",
    "DecodeComm",
    "assign_masters",
    "decode_step_comm",
]


@dataclass(frozen=True)
class MasterAssignment:
    """Requests each master instance stores new KV for.

    Parameters
    ----------
    masters : dict of int to tuple of int
        Request ids per master instance.

    """

    masters: Dict[int, Tuple[int, ...]]

    @property
    def request_ids(self) -> Tuple[int, ...]:
        """Every assigned request, sorted."""
        return tuple(
            sorted(r for rids in self.masters.values() for r in rids)
        )

    def counts(self) -> Dict[int, int]:
        """Number of requests per master."""
        return {m: len(rids) for m, rids in self.masters.items()}

    def master_of(self, request_id: int) -> int:
        """Get the master of ``request_id``."""
        for master, rids in self.masters.items():
            if request_id in rids:
                return master
        raise_error(f"Request {request_id} has no master", klass=KeyError)


def assign_masters(
    request_ids: Iterable[int], masters: Sequence[int]
) -> MasterAssignment:
    """Spread requests over masters as evenly as possible.

    Requests (ascending id) are dealt round-robin to masters (ascending
    id), so per-master counts differ by at most one.

    Parameters
    ----------
    request_ids : iterable of int
        The decoding batch.
    masters : sequence of int
        Master instances.

    Returns
    -------
    MasterAssignment
        The assignment.

    """
    masters = sorted(set(masters))
    if not masters:
        raise_error("Decoding needs at least one master")
    dealt: Dict[int, list] = {m: [] for m in masters}
    for k, rid in enumerate(sorted(request_ids)):
        dealt[masters[k % len(masters)]].append(rid)
    return MasterAssignment({m: tuple(r) for m, r in dealt.items()})


@dataclass(frozen=True)
class DecodeComm:
    """Communication of one decoding step.

    Parameters
    ----------
    query_volume : int
        Token-equivalents of queries broadcast to the other instances.
    overlappable_volume : int
        Traffic between masters that overlaps with local attention.
    appended : dict of int to int
        Master that stores the new token of each request.

    """

    query_volume: int
    overlappable_volume: int
    appended: Dict[int, int]


def decode_step_comm(
    instances: Sequence[int],
    assignment: MasterAssignment,
    free: Mapping[int, int],
) -> DecodeComm:
    """Account one distributed decoding step of a group.

    Parameters
    ----------
    instances : sequence of int
        Members of the group.
    assignment : MasterAssignment
        Master of every request in the batch.
    free : mapping of int to int
        Free slots per instance.

    Returns
    -------
    DecodeComm
        Communication volumes and where each new token lands.

    Raises
    ------
    MasterFullError
        If a master has fewer free slots than requests to append.

    """
    members = set(instances)
    outside = set(assignment.masters) - members
    if outside:
        raise_error(
            f"Masters {sorted(outside)} are not members of group "
            f"{sorted(members)}"
        )
    for master, rids in sorted(assignment.masters.items()):
        if len(rids) > free.get(master, 0):
            raise_error(
                f"Master {master} has {free.get(master, 0)} free slots for "
                f"{len(rids)} new tokens",
                klass=MasterFullError,
            )
    b = len(assignment.request_ids)
    d = len(members)
    n_masters = sum(1 for rids in assignment.masters.values() if rids)
    appended = {
        rid: master
        for master, rids in assignment.masters.items()
        for rid in rids
    }
    return DecodeComm(
        query_volume=b * (d - 1),
        overlappable_volume=b * max(n_masters - 1, 0),
        appended=appended,
    )
