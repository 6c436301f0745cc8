"""Provide tests for the event log."""

# Authors: The espsim developers
# License: AGPL

import numpy as np
import pytest

from espsim.simulation import EventLog
from espsim.utils.exceptions import TraceParseError


def _small_log() -> EventLog:
    """Build the log of one request."""
    log = EventLog()
    log.record("arrival", 0.0, request=0, input_len=4, output_len=2)
    log.record("prefill_start", 1.0, requests=(0,), group=[0, 1])
    log.record("prefill_end", 3.0, requests=[0], group=[0, 1])
    log.record("decode_step", 3.0, requests=[0], duration=1.5, chunk=None)
    log.record("decode_step", 4.5, requests=[0], duration=1.5)
    log.record("finish", 6.0, request=0, latency=6.0)
    return log


def test_event_log_record() -> None:
    """Test recording and filtering events."""
    log = _small_log()
    assert len(log) == 6
    first_step = log.of_kind("decode_step")[0]
    assert "chunk" not in first_step
    assert log.of_kind("prefill_start")[0]["requests"] == [0]
    assert [e["kind"] for e in log][-1] == "finish"
    with pytest.raises(ValueError, match="Unknown event kind"):
        log.record("teleport", 1.0)


def test_event_log_numpy_fields() -> None:
    """Test that numpy scalars are stored as plain numbers."""
    log = EventLog()
    log.record("migration", np.float64(2.0), volume=np.int64(7))
    (event,) = log.of_kind("migration")
    assert type(event["volume"]) is int
    assert type(event["time"]) is float


def test_event_log_roundtrip() -> None:
    """Test that serialized logs read back equal."""
    log = _small_log()
    text = log.dumps()
    assert text.splitlines()[0].startswith('{"input_len": 4')
    assert EventLog.loads(text) == log
    assert EventLog.loads(text).digest() == log.digest()


def test_event_log_malformed() -> None:
    """Test the line number of a malformed event."""
    with pytest.raises(TraceParseError, match="line 2"):
        EventLog.loads('{"kind": "arrival", "time": 0}\n{"time": 1}\n')


def test_event_log_frames() -> None:
    """Test the per-event and per-request frames."""
    log = _small_log()
    assert list(log.to_frame()["kind"]) == [e["kind"] for e in log]
    frame = log.requests_frame()
    row = frame.loc[0]
    assert row["arrival"] == 0.0
    assert row["prefill_start"] == 1.0
    assert row["prefill_end"] == 3.0
    assert row["finish"] == 6.0
    assert row["decode_time"] == 3.0
    assert not row["rejected"]


def test_event_log_evicted_request() -> None:
    """Test that an eviction discards the earlier attempt."""
    log = EventLog()
    log.record("arrival", 0.0, request=3, input_len=4, output_len=2)
    log.record("prefill_end", 1.0, requests=[3])
    log.record("decode_step", 1.0, requests=[3], duration=1.0)
    log.record("evict", 2.0, request=3)
    log.record("prefill_end", 5.0, requests=[3])
    log.record("decode_step", 5.0, requests=[3], duration=1.0)
    log.record("decode_step", 6.0, requests=[3], duration=1.0)
    log.record("finish", 7.0, request=3)
    row = log.requests_frame().loc[3]
    assert row["evictions"] == 1
    assert row["prefill_end"] == 5.0
    assert row["decode_time"] == 2.0
