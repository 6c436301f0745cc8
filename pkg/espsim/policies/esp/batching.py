"""Provide the dynamic program that splits a prefill into batches."""

# Authors: The espsim developers
# License: AGPL

from dataclasses import dataclass, field
from itertools import combinations
from typing import List, Mapping, Sequence, Tuple

import numpy as np

from ...costmodel import ScalingInfoBase, Strategy
from ...utils import logger, raise_error
from ...utils.exceptions import InfeasibleError, SizeLimitError


__all__ = [
    "BatchPlan",
    "DPTable",
    "sort_requests",
    "sort_instances",
    "batch_dp",
    "batch_dp_bruteforce",
]

_BRUTEFORCE_MAX_REQUESTS = 8
_BRUTEFORCE_MAX_INSTANCES = 6


@dataclass(frozen=True)
class BatchPlan:
    """One prefill batch and the instances it runs on."""

    request_ids: Tuple[int, ...]
    instances: Tuple[int, ...]
    cost: float

    @property
    def dop(self) -> int:
        """Instances of the batch."""
        return len(self.instances)


@dataclass
class DPTable:
    """Filled tables of :func:`batch_dp`.

    ``f[i, k]`` is the least summed input latency of the ``i`` longest
    requests on the first ``k`` instances; ``split_req`` and ``split_ins``
    hold where the last batch starts (``-1`` for unreachable cells).

    """

    f: np.ndarray
    split_req: np.ndarray
    split_ins: np.ndarray
    value: float
    batches: List[BatchPlan] = field(default_factory=list)
    bounds: str = "none"

    def monotone_violations(self) -> List[Tuple[str, int, int]]:
        """List cells where the split points decrease.

        Returns
        -------
        list of (str, int, int)
            ``("req", i, k)`` when ``split_req[i, k - 1] > split_req[i, k]``
            and ``("ins", i, k)`` when
            ``split_ins[i - 1, k] > split_ins[i, k]``, over reachable cells.

        """
        violations = []
        n, m = self.f.shape[0] - 1, self.f.shape[1] - 1
        for i in range(1, n + 1):
            for k in range(1, m + 1):
                if self.split_req[i, k] < 0:
                    continue
                left = self.split_req[i, k - 1]
                if left >= 0 and left > self.split_req[i, k]:
                    violations.append(("req", i, k))
                above = self.split_ins[i - 1, k]
                if above >= 0 and above > self.split_ins[i, k]:
                    violations.append(("ins", i, k))
        return violations


def sort_requests(lengths: Mapping[int, int]) -> List[int]:
    """Order request ids by length, longest first (ties by id)."""
    return sorted(lengths, key=lambda r: (-lengths[r], r))


def sort_instances(
    instances: Sequence[int],
    free: Mapping[int, int],
    instances_per_node: int = 8,
) -> List[int]:
    """Order instances by node, then free slots ascending, then id."""
    return sorted(
        instances, key=lambda i: (i // instances_per_node, free[i], i)
    )


class _Cost:
    """Summed input latency of contiguous slices of the sorted requests."""

    def __init__(
        self, lengths: Sequence[int], sib: ScalingInfoBase, max_dop: int
    ) -> None:
        lengths = np.asarray(lengths, dtype=np.float64)
        self.p1 = np.concatenate([[0.0], np.cumsum(lengths)])
        self.p2 = np.concatenate([[0.0], np.cumsum(lengths**2)])
        self.coef = np.full((max_dop + 1, 3), np.inf)
        for d in range(1, max_dop + 1):
            if sib.has(Strategy(d, 1)):
                self.coef[d] = sib.coefficients(Strategy(d, 1)).as_tuple()

    def __call__(self, j: int, i: int, dop: int) -> float:
        alpha, beta, gamma = self.coef[dop]
        latency = (
            alpha
            + beta * (self.p1[i] - self.p1[j])
            + gamma * (self.p2[i] - self.p2[j])
        )
        return float((i - j) * latency)


def _fill(
    n: int,
    m: int,
    cost: _Cost,
    slots: np.ndarray,
    monotone: bool,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    f = np.full((n + 1, m + 1), np.inf)
    split_req = np.full((n + 1, m + 1), -1, dtype=np.int64)
    split_ins = np.full((n + 1, m + 1), -1, dtype=np.int64)
    f[0, 0] = 0.0
    for i in range(1, n + 1):
        for k in range(1, m + 1):
            j_low, l_low = 0, 0
            if monotone:
                j_low = max(int(split_req[i, k - 1]), 0)
                l_low = max(int(split_ins[i - 1, k]), 0)
            best, arg = np.inf, (-1, -1)
            for j in range(j_low, i):
                demand = cost.p1[i] - cost.p1[j]
                for l in range(l_low, k):  # noqa: E741
                    if not np.isfinite(f[j, l]):
                        continue
                    if demand > slots[k] - slots[l]:
                        continue
                    value = f[j, l] + cost(j, i, k - l)
                    if value < best:
                        best, arg = value, (j, l)
            if np.isfinite(best):
                f[i, k] = best
                split_req[i, k], split_ins[i, k] = arg
    return f, split_req, split_ins


def batch_dp(
    lengths: Mapping[int, int],
    instances: Sequence[int],
    free: Mapping[int, int],
    sib: ScalingInfoBase,
    instances_per_node: int = 8,
    bounds: str = "none",
) -> DPTable:
    """Split a prefill into batches with their own DoP.

    Requests are sorted longest first and instances by location, then free
    slots ascending. Every batch takes a contiguous slice of each order and
    its prompts must fit the slice's free slots; the split minimizes the
    summed input latency. Instances past the last batch stay unused.

    Parameters
    ----------
    lengths : mapping of int to int
        Prompt length per request id.
    instances : sequence of int
        The allocated instances.
    free : mapping of int to int
        Free slots per instance.
    sib : ScalingInfoBase
        The cost model.
    instances_per_node : int, optional
        Instances per node (default 8).
    bounds : {"none", "monotone"}, optional
        ``"none"`` searches every split and returns an optimal batching.
        ``"monotone"`` starts the split search at the neighbouring cells'
        split points; it is faster but may miss the optimum, because the
        optimal split points are not monotone in general (default
        ``"none"``).

    Returns
    -------
    DPTable
        The tables and the backtracked batches.

    Raises
    ------
    InfeasibleError
        If no split fits the free slots.

    """
    if bounds not in ("none", "monotone"):
        raise_error(f"Unknown DP bounds: {bounds!r}")
    rids = sort_requests(lengths)
    order = sort_instances(instances, free, instances_per_node)
    n, m = len(rids), len(order)
    if n == 0 or m == 0:
        raise_error(
            f"Cannot batch {n} requests on {m} instances",
            klass=InfeasibleError,
        )
    cost = _Cost([lengths[r] for r in rids], sib, m)
    slots = np.concatenate([[0.0], np.cumsum([free[i] for i in order])])
    f, split_req, split_ins = _fill(n, m, cost, slots, bounds == "monotone")
    if bounds == "monotone" and not np.isfinite(f[n]).any():
        logger.debug("Bounded DP found no split, searching all splits")
        f, split_req, split_ins = _fill(n, m, cost, slots, False)
        bounds = "none"
    if not np.isfinite(f[n]).any():
        raise_error(
            f"No batching of {n} requests fits {m} instances",
            klass=InfeasibleError,
        )
    k = int(np.argmin(f[n]))
    value = float(f[n, k])
    batches = []
    i = n
    while i > 0:
        j, l = int(split_req[i, k]), int(split_ins[i, k])  # noqa: E741
        batches.append(
            BatchPlan(
                request_ids=tuple(rids[j:i]),
                instances=tuple(order[l:k]),
                cost=cost(j, i, k - l),
            )
        )
        i, k = j, l
    batches.reverse()
    return DPTable(
        f=f,
        split_req=split_req,
        split_ins=split_ins,
        value=value,
        batches=batches,
        bounds=bounds,
    )


def batch_dp_bruteforce(
    lengths: Mapping[int, int],
    instances: Sequence[int],
    free: Mapping[int, int],
    sib: ScalingInfoBase,
    instances_per_node: int = 8,
) -> Tuple[float, List[BatchPlan]]:
    """Find the best contiguous split by enumeration.

    Parameters
    ----------
    lengths : mapping of int to int
        Prompt length per request id (at most 8 requests).
    instances : sequence of int
        The allocated instances (at most 6).
    free : mapping of int to int
        Free slots per instance.
    sib : ScalingInfoBase
        The cost model.
    instances_per_node : int, optional
        Instances per node (default 8).

    Returns
    -------
    float
        The least summed input latency.
    list of BatchPlan
        The batches achieving it.

    Raises
    ------
    SizeLimitError
        If the problem is too large to enumerate.
    InfeasibleError
        If no split fits the free slots.

    """
    if len(lengths) > _BRUTEFORCE_MAX_REQUESTS:
        raise_error(
            f"Enumeration supports at most {_BRUTEFORCE_MAX_REQUESTS} "
            f"requests, got {len(lengths)}",
            klass=SizeLimitError,
        )
    if len(instances) > _BRUTEFORCE_MAX_INSTANCES:
        raise_error(
            f"Enumeration supports at most {_BRUTEFORCE_MAX_INSTANCES} "
            f"instances, got {len(instances)}",
            klass=SizeLimitError,
        )
    rids = sort_requests(lengths)
    order = sort_instances(instances, free, instances_per_node)
    n, m = len(rids), len(order)
    cost = _Cost([lengths[r] for r in rids], sib, max(m, 1))
    slots = np.concatenate([[0.0], np.cumsum([free[i] for i in order])])
    best, best_cuts = np.inf, None
    for n_batches in range(1, min(n, m) + 1):
        for req_cuts in combinations(range(1, n), n_batches - 1):
            req_bounds = (0, *req_cuts, n)
            for used in range(n_batches, m + 1):
                for ins_cuts in combinations(range(1, used), n_batches - 1):
                    ins_bounds = (0, *ins_cuts, used)
                    total = 0.0
                    for b in range(n_batches):
                        j, i = req_bounds[b], req_bounds[b + 1]
                        l, k = ins_bounds[b], ins_bounds[b + 1]  # noqa: E741
                        if cost.p1[i] - cost.p1[j] > slots[k] - slots[l]:
                            total = np.inf
                            break
                        total += cost(j, i, k - l)
                    if total < best:
                        best, best_cuts = total, (req_bounds, ins_bounds)
    if best_cuts is None:
        raise_error(
            f"No batching of {n} requests fits {m} instances",
            klass=InfeasibleError,
        )
    req_bounds, ins_bounds = best_cuts
    batches = [
        BatchPlan(
            request_ids=tuple(rids[req_bounds[b] : req_bounds[b + 1]]),
            instances=tuple(order[ins_bounds[b] : ins_bounds[b + 1]]),
            cost=cost(
                req_bounds[b],
                req_bounds[b + 1],
                ins_bounds[b + 1] - ins_bounds[b],
            ),
        )
        for b in range(len(req_bounds) - 1)
    ]
    return float(best), batches
