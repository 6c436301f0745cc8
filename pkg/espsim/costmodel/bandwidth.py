"""Provide the bandwidth model used to price KV migration."""

# Authors: The espsim developers
# License: AGPL

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Tuple

import numpy as np

from ..utils import raise_error


__all__ = ["BandwidthModel", "migration_time"]


def migration_time(volume: float, bandwidth: float) -> float:
    """Compute the time to move ``volume`` KV tokens.

    Parameters
    ----------
    volume : float
        Tokens to move.
    bandwidth : float
        Tokens per ms.

    Returns
    -------
    float
        Time in ms; infinite when a positive volume meets zero bandwidth.

    """
    if volume < 0:
        raise_error(f"Migration volume must be non-negative, got {volume}")
    if volume == 0:
        return 0.0
    if bandwidth <= 0:
        return math.inf
    return volume / bandwidth


@dataclass(frozen=True)
class BandwidthModel:
    """Pairwise bandwidth between instances in tokens per ms.

    Instances on the same node talk at ``intra_node`` and across nodes at
    ``inter_node``. Individual pairs can be overridden.

    Parameters
    ----------
    intra_node : float, optional
        Bandwidth inside a node (default 800.0).
    inter_node : float, optional
        Bandwidth across nodes (default 200.0).
    instances_per_node : int, optional
        Instances per node (default 8).
    pairs : dict, optional
        Bandwidth of specific ``(source, target)`` pairs.

    """

    intra_node: float = 800.0
    inter_node: float = 200.0
    instances_per_node: int = 8
    pairs: Dict[Tuple[int, int], float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.intra_node <= 0 or self.inter_node <= 0:
            raise_error("Bandwidth must be positive")
        if self.instances_per_node < 1:
            raise_error("instances_per_node must be >= 1")
        if any(bw <= 0 for bw in self.pairs.values()):
            raise_error("Pair bandwidth must be positive")

    @classmethod
    def uniform(cls, bandwidth: float) -> "BandwidthModel":
        """Create a model with the same bandwidth between every pair."""
        return cls(intra_node=bandwidth, inter_node=bandwidth)

    def pair(self, source: int, target: int) -> float:
        """Get the bandwidth from ``source`` to ``target``."""
        if (source, target) in self.pairs:
            return self.pairs[(source, target)]
        if (target, source) in self.pairs:
            return self.pairs[(target, source)]
        same_node = (
            source // self.instances_per_node
            == target // self.instances_per_node
        )
        return self.intra_node if same_node else self.inter_node

    def average(self, sources: Iterable[int], targets: Iterable[int]) -> float:
        """Get the mean bandwidth between two instance sets.

        Parameters
        ----------
        sources : iterable of int
            Sending instances.
        targets : iterable of int
            Receiving instances.

        Returns
        -------
        float
            Mean over distinct pairs, ``intra_node`` if there is none.

        """
        values = [
            self.pair(s, t) for s in sources for t in targets if s != t
        ]
        if not values:
            return self.intra_node
        return float(np.mean(values))
