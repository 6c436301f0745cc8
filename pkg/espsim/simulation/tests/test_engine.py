"""Provide tests for the simulation engine."""

# Authors: The espsim developers
# License: AGPL

import pytest

from espsim.cluster import Phase
from espsim.simulation import SimConfig, Simulator, TraceRecord, gen_trace
from espsim.testing import make_sib, uniform_sib
from espsim.utils.exceptions import RequestTooLargeError


def _config(**params) -> SimConfig:
    """Build a small configuration with the uniform SIB."""
    defaults = {
        "n_instances": 1,
        "kv_capacity": 100,
        "sib": uniform_sib(8),
        "check_invariants": True,
    }
    defaults.update(params)
    return SimConfig(**defaults)


def test_engine_empty_trace() -> None:
    """Test that an empty trace leaves the clock at zero."""
    sim = Simulator(_config())
    log = sim.run([])
    assert len(log) == 0
    assert sim.clock == 0.0


def test_engine_single_request_timeline() -> None:
    """Test one prefill iteration followed by three decoding steps."""
    sim = Simulator(_config(sib=make_sib(max_dop=1)))
    log = sim.run([TraceRecord(0.0, 5, 3)])
    assert [e["time"] for e in log.of_kind("prefill_end")] == [1.0]
    assert [e["time"] for e in log.of_kind("decode_step")] == [1.0, 2.0, 3.0]
    (finish,) = log.of_kind("finish")
    assert finish["time"] == 4.0
    assert finish["latency"] == 4.0
    request = sim.cluster.requests[0]
    assert request.phase == Phase.FINISHED
    assert request.generated == 3
    assert request.placement == {}
    assert int(sim.cluster.pool.used.sum()) == 0



def test_engine_avg_decode_latency_counts_execution() -> None:
    """Test that the decoding mean excludes time spent waiting."""
    config = _config(sib=make_sib(max_dop=1), policy="static-tp")
    sim = Simulator(config)
    # The second prefill pauses decoding of the first request
    sim.run([TraceRecord(0.0, 5, 3), TraceRecord(1.5, 5, 1)])
    requests = list(sim.cluster.requests.values())
    assert all(r.phase == Phase.FINISHED for r in requests)
    executed = [r.decode_exec_time for r in requests]
    waited = [r.finish_time - r.prefill_done_time for r in requests]
    assert sim.avg_decode_latency == pytest.approx(
        sum(executed) / len(executed)
    )
    assert sum(waited) > sum(executed)


def test_engine_deterministic() -> None:
    """Test that identical runs give identical logs."""
    trace = gen_trace(rate=5.0, distribution="sharegpt", n=40, seed=7)
    config = SimConfig(
        n_instances=4, kv_capacity=20_000, check_invariants=True
    )
    first = Simulator(config).run(trace)
    second = Simulator(config).run(trace)
    assert first.dumps() == second.dumps()
    assert first.digest() == second.digest()
    assert len(first.of_kind("finish")) == 40
    assert all(e["volume"] == 0 for e in first.of_kind("scale_down"))


def test_engine_timestamps_monotone() -> None:
    """Test per-request timestamps and charged decoding time."""
    trace = gen_trace(rate=20.0, distribution="sharegpt", n=20, seed=3)
    config = SimConfig(n_instances=2, kv_capacity=20_000)
    frame = Simulator(config).run(trace).requests_frame()
    assert (frame["arrival"] <= frame["prefill_start"]).all()
    assert (frame["prefill_start"] < frame["prefill_end"]).all()
    assert (frame["prefill_end"] < frame["finish"]).all()
    waited = frame["finish"] - frame["prefill_end"]
    assert (waited >= frame["decode_time"] - 1e-9).all()


@pytest.mark.parametrize(
    "policy, served",
    [
        ("esp", True),
        ("replicated:2x4", False),
        ("disagg:4+4", False),
    ],
)
def test_engine_long_request(policy: str, served: bool) -> None:
    """Test which policies can hold a 250K-token request.

    Parameters
    ----------
    policy : str
        The parametrized policy spec.
    served : bool
        Whether the request finishes.

    """
    config = _config(
        n_instances=8,
        kv_capacity=60_000,
        policy=policy,
        on_oversized="reject",
    )
    log = Simulator(config).run([TraceRecord(0.0, 250_000, 2)])
    assert len(log.of_kind("finish")) == int(served)
    assert len(log.of_kind("reject")) == int(not served)


def test_engine_oversized_raises() -> None:
    """Test the default reaction to a request no group can hold."""
    config = _config(n_instances=2, kv_capacity=100, policy="static-tp:1")
    with pytest.warns(RuntimeWarning, match="unused"):
        sim = Simulator(config)
    with pytest.raises(RequestTooLargeError, match="exceeds the 100"):
        sim.run([TraceRecord(0.0, 120, 1)])


def test_engine_static_never_scales() -> None:
    """Test that fixed groups keep their membership."""
    trace = [TraceRecord(float(i), 8, 3) for i in range(6)]
    config = _config(n_instances=2, kv_capacity=200, policy="static-tp")
    log = Simulator(config).run(trace)
    assert len(log.of_kind("finish")) == 6
    for kind in ["ring", "scale_down", "scale_up", "release", "migration"]:
        assert log.of_kind(kind) == []
    assert {tuple(e["group"]) for e in log.of_kind("decode_step")} == {
        (0, 1)
    }


def test_engine_disagg_migrated_volume() -> None:
    """Test that every request ships its whole KV to the decoding set."""
    trace = [
        TraceRecord(0.0, 10, 3),
        TraceRecord(0.5, 20, 2),
        TraceRecord(4.0, 7, 5),
    ]
    config = _config(n_instances=2, kv_capacity=1_000, policy="disagg:1+1")
    log = Simulator(config).run(trace)
    assert len(log.of_kind("finish")) == 3
    volumes = [e["volume"] for e in log.of_kind("reactive_migration")]
    assert sum(volumes) == (10 + 1) + (20 + 1) + (7 + 1)
    assert {tuple(e["group"]) for e in log.of_kind("decode_step")} == {(1,)}


def test_engine_disagg_single_token() -> None:
    """Test a request finished by the first token of the prefill set."""
    config = _config(n_instances=2, kv_capacity=1_000, policy="disagg:1+1")
    log = Simulator(config).run([TraceRecord(0.0, 10, 1)])
    assert log.of_kind("decode_step") == []
    (finish,) = log.of_kind("finish")
    assert finish["time"] == log.of_kind("prefill_end")[0]["time"]


def test_engine_chunked_timeline() -> None:
    """Test a prompt prefilled in three chunks before decoding."""
    config = _config(policy="chunked:4")
    log = Simulator(config).run([TraceRecord(0.0, 10, 2)])
    steps = log.of_kind("decode_step")
    assert [e.get("chunk") for e in steps] == [4, 4, 2, None, None]
    assert [e["time"] for e in log.of_kind("prefill_end")] == [3.0]
    assert log.of_kind("finish")[0]["time"] == 5.0


def test_engine_replay_from_disk(tmp_path) -> None:
    """Test that a saved log reads back equal.

    Parameters
    ----------
    tmp_path : pathlib.Path
        The path to the test directory.

    """
    trace = gen_trace(rate=10.0, distribution="sharegpt", n=10, seed=1)
    log = Simulator(SimConfig(n_instances=2, kv_capacity=20_000)).run(trace)
    path = tmp_path / "events.jsonl"
    log.to_jsonl(path)
    assert type(log).from_jsonl(path) == log
