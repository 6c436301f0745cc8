"""Provide tests for the ring schedule."""

# Authors: The espsim developers
# License: AGPL

import numpy as np
import pytest

from espsim.mechanisms import build_ring_schedule


def test_single_instance_ring() -> None:
    """Test that a one-instance ring has no traffic."""
    schedule = build_ring_schedule([5], {5: 100})
    assert schedule.dop == 1
    assert len(schedule.rounds) == 1
    assert schedule.total_volume == 0
    assert schedule.coverage().tolist() == [[1]]


def test_three_instance_ring() -> None:
    """Test rounds, receivers and coverage of a three-instance ring."""
    schedule = build_ring_schedule([0, 1, 2], {0: 4, 1: 4, 2: 4})
    assert len(schedule.rounds) == 3
    assert schedule.rounds[0] == ()
    for rnd in schedule.rounds[1:]:
        for transfer in rnd:
            assert transfer.receiver == (transfer.sender + 1) % 3
    for instance in range(3):
        assert schedule.received(instance) == 8
    assert (schedule.coverage() == 1).all()


@pytest.mark.parametrize("d", range(1, 17))
def test_ring_coverage_property(d: int) -> None:
    """Test coverage and volume over random layouts of each ring size.

    Parameters
    ----------
    d : int
        The parametrized ring size.

    """
    rng = np.random.default_rng(d)
    for _ in range(100):
        instances = rng.permutation(32)[:d].tolist()
        segments = rng.integers(0, 1000, size=d).tolist()
        schedule = build_ring_schedule(
            instances, dict(zip(instances, segments))
        )
        assert len(schedule.rounds) == d
        assert (schedule.coverage() == 1).all()
        assert schedule.total_volume == (d - 1) * sum(segments)
        for instance in instances:
            assert schedule.received(instance) == (
                sum(segments) - segments[instances.index(instance)]
            )


def test_ring_errors() -> None:
    """Test invalid rings."""
    with pytest.raises(ValueError, match="at least one"):
        build_ring_schedule([], {})
    with pytest.raises(ValueError, match="distinct"):
        build_ring_schedule([1, 1], {})
    with pytest.raises(ValueError, match="outside the ring"):
        build_ring_schedule([0, 1], {2: 5})
