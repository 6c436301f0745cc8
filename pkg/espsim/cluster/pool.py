"""Provide the distributed KV-cache pool at token granularity."""

# Authors: The espsim developers
# License: AGPL

from enum import Enum
from typing import TYPE_CHECKING, Dict, Iterable, Optional, Sequence

import numpy as np

from ..utils import logger, raise_error
from ..utils.exceptions import CapacityExceededError


if TYPE_CHECKING:
    from .request import Request


__all__ = ["Locality", "can_fit", "KVCachePool"]


class Locality(str, Enum):
    """Constraint on where a request's KV may be placed."""

    SINGLE_INSTANCE = "single-instance"
    TOKEN_GRANULAR = "token-granular"


def can_fit(
    free: Sequence[int],
    need: int,
    locality: Locality = Locality.TOKEN_GRANULAR,
) -> bool:
    """Check whether ``need`` tokens fit into instances with ``free`` slots.

    Parameters
    ----------
    free : sequence of int
        Free slots of each candidate instance.
    need : int
        Tokens to place.
    locality : Locality, optional
        ``SINGLE_INSTANCE`` requires one instance to hold everything,
        ``TOKEN_GRANULAR`` may spread tokens over all instances
        (default ``TOKEN_GRANULAR``).

    Returns
    -------
    bool
        Whether the tokens fit.

    """
    if need < 0:
        raise_error(f"Cannot place a negative number of tokens: {need}")
    if need == 0:
        return True
    free = np.asarray(free, dtype=np.int64)
    if free.size == 0:
        return False
    if Locality(locality) == Locality.SINGLE_INSTANCE:
        return bool(free.max() >= need)
    return bool(free.sum() >= need)


class KVCachePool:
    """Unified KV-cache pool over all elastic instances.

    Placement is tracked as per-instance token counts. The pool keeps the
    per-instance usage and updates the placement of each request it
    allocates for.

    Parameters
    ----------
    capacities : sequence of int
        KV capacity of every instance in tokens.

    """

    def __init__(self, capacities: Sequence[int]) -> None:
        self._capacity = np.asarray(capacities, dtype=np.int64)
        if self._capacity.ndim != 1 or self._capacity.size < 1:
            raise_error("The pool needs at least one instance")
        if (self._capacity < 0).any():
            raise_error("Instance capacities must be non-negative")
        self._used = np.zeros_like(self._capacity)

    @property
    def n_instances(self) -> int:
        """Number of instances in the pool."""
        return int(self._capacity.size)

    @property
    def capacity(self) -> np.ndarray:
        """Capacity of each instance (copy)."""
        return self._capacity.copy()

    @property
    def used(self) -> np.ndarray:
        """Used slots of each instance (copy)."""
        return self._used.copy()

    def free_slots(
        self, instances: Optional[Iterable[int]] = None
    ) -> np.ndarray:
        """Get free slots per instance.

        Parameters
        ----------
        instances : iterable of int, optional
            Instances to report, all if None (default None).

        Returns
        -------
        numpy.ndarray
            Free slots, in the order of ``instances``.

        """
        free = self._capacity - self._used
        if instances is None:
            return free
        return free[list(instances)]

    def can_fit(
        self,
        need: int,
        instances: Optional[Iterable[int]] = None,
        locality: Locality = Locality.TOKEN_GRANULAR,
    ) -> bool:
        """Check whether ``need`` tokens fit on ``instances``.

        Parameters
        ----------
        need : int
            Tokens to place.
        instances : iterable of int, optional
            Candidate instances, all if None (default None).
        locality : Locality, optional
            The locality constraint (default ``TOKEN_GRANULAR``).

        Returns
        -------
        bool
            Whether the tokens fit.

        """
        return can_fit(self.free_slots(instances), need, locality)

    def _delta(self, placement: Dict[int, int]) -> np.ndarray:
        delta = np.zeros_like(self._used)
        for instance, tokens in placement.items():
            if not 0 <= instance < self.n_instances:
                raise_error(f"Unknown instance {instance} in placement")
            if tokens < 0:
                raise_error(
                    f"Negative token count {tokens} for instance {instance}"
                )
            delta[instance] += tokens
        return delta

    def allocate(self, request: "Request", placement: Dict[int, int]) -> None:
        """Commit KV tokens of ``request`` to instances.

        The placement is added to whatever the request already holds. The
        operation is atomic: on error nothing changes.

        Parameters
        ----------
        request : Request
            The request owning the tokens.
        placement : dict of int to int
            Tokens to add per instance.

        Raises
        ------
        CapacityExceededError
            If an instance would exceed its capacity.

        """
        delta = self._delta(placement)
        new_used = self._used + delta
        over = np.flatnonzero(new_used > self._capacity)
        if over.size > 0:
            instance = int(over[0])
            raise_error(
                f"Instance {instance} would hold {int(new_used[instance])} "
                f"tokens but its capacity is {int(self._capacity[instance])} "
                f"(request {request.id})",
                klass=CapacityExceededError,
            )
        self._used = new_used
        for instance, tokens in placement.items():
            if tokens > 0:
                request.placement[instance] = (
                    request.placement.get(instance, 0) + tokens
                )

    def free(self, request: "Request") -> None:
        """Release every KV token held by ``request``.

        Parameters
        ----------
        request : Request
            The request to release.

        """
        if not request.placement:
            return
        self._used = self._used - self._delta(request.placement)
        request.placement = {}

    def move(
        self, request: "Request", source: int, target: int, tokens: int
    ) -> None:
        """Move KV tokens of ``request`` between instances.

        Parameters
        ----------
        request : Request
            The request owning the tokens.
        source : int
            Instance the tokens leave.
        target : int
            Instance the tokens go to.
        tokens : int
            Number of tokens to move.

        Raises
        ------
        ValueError
            If ``request`` holds fewer than ``tokens`` on ``source``.
        CapacityExceededError
            If ``target`` lacks free slots.

        """
        if tokens == 0 or source == target:
            return
        held = request.placement.get(source, 0)
        if held < tokens:
            raise_error(
                f"Request {request.id} holds {held} tokens on instance "
                f"{source}, cannot move {tokens}"
            )
        if self._capacity[target] - self._used[target] < tokens:
            raise_error(
                f"Instance {target} cannot receive {tokens} tokens of "
                f"request {request.id}",
                klass=CapacityExceededError,
            )
        self._used[source] -= tokens
        self._used[target] += tokens
        if held == tokens:
            del request.placement[source]
        else:
            request.placement[source] = held - tokens
        request.placement[target] = request.placement.get(target, 0) + tokens
        logger.debug(
            f"Moved {tokens} tokens of request {request.id} from instance "
            f"{source} to {target}"
        )

    def check(self, requests: Iterable["Request"]) -> None:
        """Check conservation and overflow against live requests.

        Parameters
        ----------
        requests : iterable of Request
            Every request holding KV.

        Raises
        ------
        RuntimeError
            If usage differs from the sum of placements or exceeds a
            capacity.

        """
        expected = np.zeros_like(self._used)
        for request in requests:
            expected += self._delta(request.placement)
        if not np.array_equal(expected, self._used):
            raise_error(
                "KV conservation violated: pool usage "
                f"{self._used.tolist()} != placements {expected.tolist()}",
                klass=RuntimeError,
            )
        if (self._used > self._capacity).any():
            raise_error(
                f"KV overflow: usage {self._used.tolist()} exceeds "
                f"capacity {self._capacity.tolist()}",
                klass=RuntimeError,
            )
