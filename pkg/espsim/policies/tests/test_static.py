"""Provide tests for policies with fixed groups."""

# Authors: The espsim developers
# License: AGPL

import pytest

from espsim.cluster import Phase
from espsim.costmodel import Strategy
from espsim.pipeline.registry import build
from espsim.policies import (
    BasePolicy,
    ReplicatedPolicy,
    StaticHybridPolicy,
    StaticTPPolicy,
)
from espsim.policies.static import spread_placement
from espsim.testing import make_cluster, make_request, make_state
from espsim.utils.exceptions import ConfigError


def test_spread_placement() -> None:
    """Test even splits and the fallback for unbalanced instances."""
    free = {0: 10, 1: 10, 2: 10}
    assert spread_placement({1: 7}, [0, 1, 2], free) == {
        1: {0: 3, 1: 2, 2: 2}
    }
    assert free == {0: 7, 1: 8, 2: 8}
    free = {0: 1, 1: 10}
    assert spread_placement({1: 6}, [0, 1], free) == {1: {1: 6}}
    assert free == {0: 1, 1: 4}


def test_static_tp_setup() -> None:
    """Test one fixed group over the whole cluster."""
    cluster = make_cluster([10, 10, 10, 10])
    policy = StaticTPPolicy()
    policy.setup(cluster)
    assert policy.group_ids == [0]
    group = cluster.groups[0]
    assert group.instances == [0, 1, 2, 3]
    assert group.fixed
    assert policy.max_request_tokens(cluster) == 40
    assert cluster.idle_instances() == []


def test_replicated_setup_capacity() -> None:
    """Test that each copy bounds the largest request."""
    cluster = make_cluster([100_000] * 8)
    policy = build(
        "policy", "replicated", BasePolicy, {"dop": 2, "copies": 4}
    )
    policy.setup(cluster)
    assert [cluster.groups[g].instances for g in policy.group_ids] == [
        [0, 1],
        [2, 3],
        [4, 5],
        [6, 7],
    ]
    assert policy.max_request_tokens(cluster) == 200_000


def test_static_setup_errors() -> None:
    """Test layouts that do not match the cluster."""
    with pytest.raises(ConfigError, match="needs 4 instances"):
        StaticTPPolicy(dop=4).setup(make_cluster([10, 10]))
    with pytest.warns(RuntimeWarning, match="unused"):
        StaticTPPolicy(dop=1).setup(make_cluster([10, 10]))
    with pytest.raises(ConfigError, match="copies must be >= 1"):
        ReplicatedPolicy(dop=2, copies=0)


def test_hybrid_strategy() -> None:
    """Test the hybrid strategy and parameters."""
    policy = StaticHybridPolicy(sp=2, tp=2)
    assert policy.strategy(4) == Strategy(2, 2)
    assert policy.layout(8) == [[0, 1, 2, 3]]
    assert repr(policy) == "<StaticHybridPolicy(sp=2, tp=2)>"


def test_replicated_routing() -> None:
    """Test routing to the copy with the fewest reserved tokens."""
    state = make_state(
        free=[20, 20],
        pending=[
            make_request(rid=0, input_len=5, output_len=4),
            make_request(rid=1, input_len=5, output_len=4),
            make_request(rid=2, input_len=5, output_len=4),
        ],
    )
    policy = ReplicatedPolicy(dop=1, copies=2)
    policy.setup(state.cluster)
    decision = policy.schedule(state)
    assert [b.request_ids for b in decision.prefill] == [[0, 2], [1]]
    first = decision.prefill[0]
    assert first.group_id == 0
    assert first.join_group == 0
    assert first.placement == {0: {0: 5}, 2: {0: 5}}
    assert first.strategy == Strategy(1, 1)


def test_static_head_of_line_blocking() -> None:
    """Test that the queue head blocks smaller requests behind it."""
    state = make_state(
        free=[10],
        pending=[
            make_request(rid=0, input_len=4, output_len=4),
            make_request(rid=1, input_len=2, output_len=2),
            make_request(rid=2, input_len=1, output_len=1),
        ],
    )
    policy = StaticTPPolicy()
    policy.setup(state.cluster)
    decision = policy.schedule(state)
    assert decision.dispatched == [0]


def test_static_decode_step() -> None:
    """Test decoding over every member of a fixed group."""
    state = make_state(free=[10, 10])
    policy = StaticTPPolicy()
    policy.setup(state.cluster)
    request = make_request(rid=3, input_len=4, output_len=2)
    state.cluster.requests[3] = request
    state.cluster.pool.allocate(request, {0: 2, 1: 2})
    request.phase = Phase.DECODING
    state.cluster.groups[0].batch.request_ids.append(3)
    decision = policy.schedule(state)
    assert decision.prefill == []
    step = decision.decode[0]
    assert step.masters == [0, 1]
    assert step.assignment.master_of(3) == 0
    assert step.scale_up == []
    assert step.release == []
    assert step.duration == 1.0
    state.busy.add(0)
    assert policy.schedule(state).is_empty
