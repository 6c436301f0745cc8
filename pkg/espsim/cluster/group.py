"""Provide batches and parallel groups."""

# Authors: The espsim developers
# License: AGPL

from dataclasses import dataclass, field
from typing import List, Optional

from .request import Phase


__all__ = ["Batch", "ParallelGroup"]


@dataclass
class Batch:
    """Requests executed together by one parallel group."""

    id: int
    request_ids: List[int]
    phase: Phase = Phase.DECODING

    @property
    def size(self) -> int:
        """Number of requests in the batch."""
        return len(self.request_ids)


@dataclass
class ParallelGroup:
    """Disjoint set of elastic instances serving one batch.

    Parameters
    ----------
    id : int
        Group id.
    instances : list of int
        Member instances; the DoP is their number.
    batch : Batch, optional
        The batch the group serves (default None).
    masters : list of int, optional
        Instances storing new decoding tokens (default empty).
    fixed : bool, optional
        Whether the membership was fixed at launch (default False).
    prefilling : list of int, optional
        Requests whose prompt is being prefilled chunk by chunk on the
        group (default empty).

    """

    id: int
    instances: List[int]
    batch: Optional[Batch] = None
    masters: List[int] = field(default_factory=list)
    fixed: bool = False
    prefilling: List[int] = field(default_factory=list)

    @property
    def dop(self) -> int:
        """Degree of parallelism of the group."""
        return len(self.instances)

    @property
    def request_ids(self) -> List[int]:
        """Ids of the requests in the group's batch."""
        return [] if self.batch is None else list(self.batch.request_ids)
