"""Provide tests for the KV-cache pool."""

# Authors: The espsim developers
# License: AGPL

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from espsim.cluster import KVCachePool, Locality, can_fit
from espsim.testing import make_request
from espsim.utils.exceptions import CapacityExceededError


@pytest.mark.parametrize(
    "free, need, single, granular",
    [
        ([2, 2, 2], 6, False, True),
        ([2, 2, 2], 0, True, True),
        ([1, 2, 4], 7, False, True),
        ([1, 2, 4], 4, True, True),
        ([1, 2, 4], 8, False, False),
        ([], 1, False, False),
    ],
)
def test_can_fit(free: list, need: int, single: bool, granular: bool) -> None:
    """Test admission under both locality constraints.

    Parameters
    ----------
    free : list of int
        The parametrized free slots.
    need : int
        The parametrized tokens to place.
    single : bool
        The parametrized expected single-instance answer.
    granular : bool
        The parametrized expected token-granular answer.

    """
    assert can_fit(free, need, Locality.SINGLE_INSTANCE) is single
    assert can_fit(free, need, Locality.TOKEN_GRANULAR) is granular


def test_can_fit_negative() -> None:
    """Test that a negative need is rejected."""
    with pytest.raises(ValueError, match="negative"):
        can_fit([1], -1)


def test_allocate() -> None:
    """Test a feasible allocation."""
    pool = KVCachePool([5, 5])
    request = make_request(rid=0, input_len=5)
    pool.allocate(request, {0: 3, 1: 2})
    assert_array_equal(pool.used, [3, 2])
    assert request.placement == {0: 3, 1: 2}
    assert request.kv_tokens == 5


def test_allocate_atomic() -> None:
    """Test that a failing allocation leaves the pool unchanged."""
    pool = KVCachePool([1, 5])
    request = make_request(rid=0, input_len=5)
    with pytest.raises(CapacityExceededError, match="Instance 0"):
        pool.allocate(request, {0: 3, 1: 2})
    assert_array_equal(pool.used, [0, 0])
    assert request.placement == {}


def test_allocate_sequential() -> None:
    """Test slot arithmetic over sequential allocations."""
    pool = KVCachePool([2, 2])
    first = make_request(rid=0, input_len=2)
    second = make_request(rid=1, input_len=2)
    pool.allocate(first, {0: 2, 1: 0})
    pool.allocate(second, {0: 0, 1: 2})
    assert_array_equal(pool.used, [2, 2])
    assert first.placement == {0: 2}
    with pytest.raises(CapacityExceededError):
        pool.allocate(make_request(rid=2, input_len=1), {0: 1, 1: 0})


def test_allocate_invalid_placement() -> None:
    """Test unknown instances and negative counts."""
    pool = KVCachePool([2, 2])
    request = make_request(rid=0)
    with pytest.raises(ValueError, match="Unknown instance"):
        pool.allocate(request, {5: 1})
    with pytest.raises(ValueError, match="Negative"):
        pool.allocate(request, {0: -1})


def test_free() -> None:
    """Test that freeing restores the prior usage."""
    pool = KVCachePool([4, 4])
    resident = make_request(rid=0)
    pool.allocate(resident, {0: 1})
    before = pool.used
    request = make_request(rid=1)
    pool.allocate(request, {0: 2, 1: 3})
    pool.free(request)
    assert_array_equal(pool.used, before)
    assert request.placement == {}
    # Freeing an empty placement is a no-op
    pool.free(request)
    assert_array_equal(pool.used, before)


def test_random_alloc_free_accounting() -> None:
    """Test interleaved allocation and release never leaves residue."""
    rng = np.random.default_rng(7)
    pool = KVCachePool([50] * 4)
    live = {}
    for rid in range(100):
        request = make_request(rid=rid)
        placement = {
            int(i): int(rng.integers(0, 6)) for i in rng.choice(4, 2)
        }
        try:
            pool.allocate(request, placement)
        except CapacityExceededError:
            continue
        live[rid] = request
        if live and rng.random() < 0.4:
            victim = int(rng.choice(sorted(live)))
            pool.free(live.pop(victim))
        pool.check(live.values())
        assert pool.used.sum() == sum(r.kv_tokens for r in live.values())


def test_move() -> None:
    """Test moving tokens between instances."""
    pool = KVCachePool([4, 4])
    request = make_request(rid=0, input_len=4)
    pool.allocate(request, {0: 3, 1: 1})
    pool.move(request, 0, 1, 3)
    assert request.placement == {1: 4}
    assert_array_equal(pool.used, [0, 4])
    with pytest.raises(ValueError, match="holds 0 tokens"):
        pool.move(request, 0, 1, 1)
    other = make_request(rid=1)
    pool.allocate(other, {0: 1})
    with pytest.raises(CapacityExceededError, match="cannot receive"):
        pool.move(other, 0, 1, 1)


def test_check_detects_residue() -> None:
    """Test that conservation checking catches untracked usage."""
    pool = KVCachePool([4])
    request = make_request(rid=0)
    pool.allocate(request, {0: 2})
    request.placement = {}
    with pytest.raises(RuntimeError, match="conservation"):
        pool.check([request])
