"""Provide the structured event log of a simulation."""

# Authors: The espsim developers
# License: AGPL

import hashlib
import json
from pathlib import Path
from typing import Any, Dict, Iterator, List, Union

import numpy as np
import pandas as pd

from ..utils import logger, raise_error
from ..utils.exceptions import TraceParseError


__all__ = ["EVENT_KINDS", "EventLog"]


EVENT_KINDS = (
    "arrival",
    "reject",
    "dispatch",
    "prefill_start",
    "prefill_end",
    "ring",
    "scale_down",
    "reactive_migration",
    "migration",
    "preempt",
    "resume",
    "decode_step",
    "scale_up",
    "release",
    "stall",
    "evict",
    "finish",
)


def _plain(value: Any) -> Any:
    """Convert ``value`` to what a JSON round-trip gives back."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


class EventLog:
    """Time-ordered record of everything a simulation did.

    Every event is a flat mapping with ``kind`` and ``time`` plus optional
    ``request``, ``requests``, ``group`` (instance ids) and ``volume``
    fields and kind-specific extras. Metrics are computed from the log
    alone, so a log read back from disk reproduces them.

    """

    def __init__(self) -> None:
        self._events: List[Dict[str, Any]] = []

    def record(self, kind: str, time: float, **fields: Any) -> None:
        """Append an event.

        Parameters
        ----------
        kind : str
            One of :data:`EVENT_KINDS`.
        time : float
            Simulated time in ms.
        **fields
            Event fields; None values are dropped.

        Raises
        ------
        ValueError
            If ``kind`` is unknown.

        """
        if kind not in EVENT_KINDS:
            raise_error(f"Unknown event kind: {kind}")
        event = {"kind": kind, "time": float(time)}
        event.update(
            {k: _plain(v) for k, v in fields.items() if v is not None}
        )
        self._events.append(event)

    def __len__(self) -> int:
        """Number of events."""
        return len(self._events)

    def __iter__(self) -> Iterator[Dict[str, Any]]:
        """Iterate over the events in order."""
        return iter(self._events)

    def __eq__(self, other: object) -> bool:
        """Compare two logs event by event."""
        if not isinstance(other, EventLog):
            return NotImplemented
        return self._events == other._events

    def of_kind(self, kind: str) -> List[Dict[str, Any]]:
        """Get the events of one kind."""
        return [e for e in self._events if e["kind"] == kind]

    def dumps(self) -> str:
        """Serialize the log as line-delimited JSON with sorted keys."""
        return "".join(
            json.dumps(event, sort_keys=True) + "\n"
            for event in self._events
        )

    def digest(self) -> str:
        """Get the SHA-256 of the serialized log."""
        return hashlib.sha256(self.dumps().encode()).hexdigest()

    def to_jsonl(self, path: Union[str, Path]) -> None:
        """Write the log as line-delimited JSON.

        Parameters
        ----------
        path : str or pathlib.Path
            The file to write.

        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.dumps())
        logger.info(f"Wrote {len(self)} events to {path}")

    @classmethod
    def loads(cls, text: str) -> "EventLog":
        """Read a log from line-delimited JSON.

        Parameters
        ----------
        text : str
            The serialized log.

        Returns
        -------
        EventLog
            The log.

        Raises
        ------
        TraceParseError
            If a line is not a valid event.

        """
        log = cls()
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                event = json.loads(line)
                kind = event.pop("kind")
                time = event.pop("time")
                log.record(kind, time, **event)
            except (ValueError, KeyError, TypeError) as e:
                raise_error(
                    f"Malformed event at line {lineno}: {line!r}",
                    klass=TraceParseError,
                    exception=e,
                )
        return log

    @classmethod
    def from_jsonl(cls, path: Union[str, Path]) -> "EventLog":
        """Read a log written by :meth:`to_jsonl`."""
        return cls.loads(Path(path).read_text())

    def to_frame(self) -> pd.DataFrame:
        """Get the events as a data frame, one row per event."""
        return pd.DataFrame(self._events)

    def requests_frame(self) -> pd.DataFrame:
        """Summarize the life of every request.

        Returns
        -------
        pandas.DataFrame
            One row per arrived request indexed by ``request`` with arrival,
            lengths, prefill start and end, finish, rejection, evictions
            and accumulated decode time. Times of evicted attempts are
            overwritten by the last attempt.

        """
        rows: Dict[int, Dict[str, Any]] = {}
        for event in self._events:
            kind = event["kind"]
            if kind == "arrival":
                rows[event["request"]] = {
                    "request": event["request"],
                    "arrival": event["time"],
                    "input_len": event["input_len"],
                    "output_len": event["output_len"],
                    "prefill_start": np.nan,
                    "prefill_end": np.nan,
                    "finish": np.nan,
                    "rejected": False,
                    "evictions": 0,
                    "decode_time": 0.0,
                }
            elif kind == "reject":
                rows[event["request"]]["rejected"] = True
            elif kind == "prefill_start":
                for rid in event["requests"]:
                    rows[rid]["prefill_start"] = event["time"]
            elif kind == "prefill_end":
                for rid in event["requests"]:
                    rows[rid]["prefill_end"] = event["time"]
            elif kind == "decode_step":
                for rid in event["requests"]:
                    rows[rid]["decode_time"] += event["duration"]
            elif kind == "evict":
                row = rows[event["request"]]
                row["evictions"] += 1
                row["decode_time"] = 0.0
            elif kind == "finish":
                rows[event["request"]]["finish"] = event["time"]
        columns = [
            "request",
            "arrival",
            "input_len",
            "output_len",
            "prefill_start",
            "prefill_end",
            "finish",
            "rejected",
            "evictions",
            "decode_time",
        ]
        frame = pd.DataFrame(list(rows.values()), columns=columns)
        return frame.set_index("request").sort_index()
