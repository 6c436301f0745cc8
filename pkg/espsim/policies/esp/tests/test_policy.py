"""Provide tests for the elastic sequence parallelism policy."""

# Authors: The espsim developers
# License: AGPL

import pytest

from espsim.costmodel import Strategy
from espsim.pipeline.registry import build
from espsim.policies import BasePolicy, ESPPolicy, Migration
from espsim.policies.esp import dispatch, prefill_strategy, tipping_point
from espsim.policies.esp import policy as esp_policy
from espsim.simulation import SimConfig, Simulator, gen_trace
from espsim.testing import make_request, make_sib, make_state, uniform_sib


def test_esp_policy_registered() -> None:
    """Test building the policy by name."""
    policy = build("policy", "esp", BasePolicy, {})
    assert isinstance(policy, ESPPolicy)
    assert repr(policy) == "<ESPPolicy()>"


def test_esp_strategies() -> None:
    """Test the sequence-parallel strategies up to the cluster size."""
    policy = ESPPolicy()
    assert policy.strategies(uniform_sib(8), 3) == [
        Strategy(1, 1),
        Strategy(2, 1),
        Strategy(3, 1),
    ]


def test_esp_schedule_single_request() -> None:
    """Test a lone request prefilled on the fewest instances."""
    state = make_state(
        free=[10, 10],
        pending=[make_request(rid=0, input_len=6, output_len=1)],
    )
    decision = ESPPolicy().schedule(state)
    assert len(decision.prefill) == 1
    batch = decision.prefill[0]
    assert batch.request_ids == [0]
    assert batch.instances == [0]
    assert batch.strategy == Strategy(1, 1)
    assert batch.duration == 1.0
    assert batch.placement == {0: {0: 6}}
    assert batch.targets == [0]
    assert batch.lenders == {}
    assert decision.decode == []
    assert decision.dispatched == [0]


def test_esp_schedule_scales_down_after_prefill() -> None:
    """Test a parallel prefill that keeps its KV on fewer instances."""
    sib = make_sib(max_dop=3, alpha=lambda d: 30.0 / d)
    state = make_state(
        free=[4, 4, 4],
        pending=[make_request(rid=0, input_len=6, output_len=1)],
        sib=sib,
    )
    decision = ESPPolicy().schedule(state)
    batch = decision.prefill[0]
    assert batch.instances == [0, 1, 2]
    assert batch.strategy == Strategy(3, 1)
    assert batch.duration == 10.0
    assert batch.targets == [0, 1]
    assert batch.placement == {0: {0: 4, 1: 2}}


def test_esp_schedule_decodes_other_groups() -> None:
    """Test that ready decoding groups step next to a prefill."""
    decoding = make_request(rid=5, input_len=3, output_len=2)
    decoding.placement = {1: 3}
    state = make_state(
        free=[10, 10],
        pending=[make_request(rid=0, input_len=4, output_len=1)],
        batches=[([1], [decoding], [1])],
    )
    decision = ESPPolicy().schedule(state)
    assert [b.instances for b in decision.prefill] == [[0]]
    assert [s.group_id for s in decision.decode] == [0]
    assert decision.migrations == []


def test_esp_schedule_takes_over_instance() -> None:
    """Test migrating KV off an instance the prefill needs."""
    decoding = make_request(rid=9, input_len=8, output_len=2)
    decoding.placement = {1: 4, 2: 4}
    state = make_state(
        free=[10, 10, 10],
        pending=[make_request(rid=0, input_len=5, output_len=1)],
        batches=[([1, 2], [decoding], [1])],
        sib=make_sib(max_dop=3, alpha=lambda d: 100.0 / d),
    )
    decision = ESPPolicy().schedule(state)
    assert decision.migrations == [Migration(9, 1, 2, 4)]
    assert decision.shrunk == {0: [1]}
    assert decision.prefill[0].instances == [0, 1]
    assert decision.decode == []


def test_esp_schedule_idle_cluster() -> None:
    """Test an empty decision when nothing is pending or decoding."""
    decision = ESPPolicy().schedule(make_state(free=[10, 10]))
    assert decision.is_empty


@pytest.mark.parametrize("seed", range(4))
def test_esp_dispatch_during_runs(
    seed: int, monkeypatch: pytest.MonkeyPatch
) -> None:
    """Test every dispatch of a loaded cluster keeps FCFS and the bound.

    Parameters
    ----------
    seed : int
        The parametrized trace seed.
    monkeypatch : pytest.MonkeyPatch
        The pytest monkeypatch fixture.

    """
    calls = []

    def checked(state):
        pending = list(state.pending)
        result = dispatch(state)
        seen = [
            rid
            for rid in pending
            if rid in result.request_ids or rid in result.skipped
        ]
        assert seen == pending[: len(seen)]
        assert result.request_ids == [
            rid for rid in seen if rid not in result.skipped
        ]
        if len(result.request_ids) >= 2 and not result.extensions:
            strategy = prefill_strategy(state.sib, len(result.instances))
            lengths = [
                state.request(r).input_len for r in result.request_ids
            ]
            assert state.sib.prefill_time(
                lengths, strategy
            ) <= tipping_point(state.sib, strategy)
        calls.append(len(pending))
        return result

    monkeypatch.setattr(esp_policy, "dispatch", checked)
    trace = gen_trace(rate=40.0, distribution="mixed", n=150, seed=seed)
    config = SimConfig(
        n_instances=8,
        kv_capacity=60_000,
        on_oversized="reject",
        check_invariants=True,
    )
    log = Simulator(config).run(trace)
    assert len(log.of_kind("finish")) + len(log.of_kind("reject")) == 150
    assert max(calls) > 1
