"""Provide the simulated request and its lifecycle phases."""

# Authors: The espsim developers
# License: AGPL

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Optional

from ..utils import raise_error


__all__ = ["Phase", "Request", "declared_output_bound"]


class Phase(str, Enum):
    """Lifecycle phase of a request."""

    PENDING = "pending"
    PREFILL = "prefill"
    DECODING = "decoding"
    FINISHED = "finished"
    EVICTED = "evicted"
    REJECTED = "rejected"


def declared_output_bound(output_len: int, exact: bool = False) -> int:
    """Get the output bound a user would declare for a request.

    Parameters
    ----------
    output_len : int
        The true output length.
    exact : bool, optional
        If True, the bound is the true length (default False).

    Returns
    -------
    int
        ``output_len`` rounded up to the next power of two, or
        ``output_len`` itself if ``exact``.

    """
    if exact:
        return output_len
    return 1 << (output_len - 1).bit_length()


@dataclass
class Request:
    """One inference request.

    ``true_output_len`` is the oracle length taken from the trace; the
    scheduler only reads ``max_output_len`` and ``generated``.

    Parameters
    ----------
    id : int
        Request id.
    arrival_time : float
        Arrival time in ms.
    input_len : int
        Prompt length in tokens.
    true_output_len : int
        Number of tokens the request will generate.
    max_output_len : int
        User-declared bound on the output length.

    """

    id: int
    arrival_time: float
    input_len: int
    true_output_len: int
    max_output_len: int
    generated: int = 0
    prefilled: int = 0
    phase: Phase = Phase.PENDING
    placement: Dict[int, int] = field(default_factory=dict)
    prefill_start_time: Optional[float] = None
    prefill_done_time: Optional[float] = None
    finish_time: Optional[float] = None
    decode_exec_time: float = 0.0
    evictions: int = 0

    def __post_init__(self) -> None:
        if self.input_len < 1 or self.true_output_len < 1:
            raise_error(
                f"Request {self.id} lengths must be >= 1, got input "
                f"{self.input_len} and output {self.true_output_len}"
            )
        if self.max_output_len < self.true_output_len:
            raise_error(
                f"Request {self.id} max_output_len ({self.max_output_len}) "
                f"is below its output length ({self.true_output_len})"
            )

    @property
    def kv_tokens(self) -> int:
        """Tokens of KV currently placed for the request."""
        return sum(self.placement.values())

    @property
    def seq_len(self) -> int:
        """Current sequence length (input plus generated tokens)."""
        return self.input_len + self.generated

    @property
    def max_kv_tokens(self) -> int:
        """Largest KV footprint the request may reach."""
        return self.input_len + self.max_output_len

    @property
    def is_done(self) -> bool:
        """Whether every output token has been generated."""
        return self.generated >= self.true_output_len

    def reset(self) -> None:
        """Discard progress so the request can be recomputed.

        The request stays :attr:`Phase.EVICTED` in the queue until its
        prefill starts again.

        """
        self.generated = 0
        self.prefilled = 0
        self.phase = Phase.EVICTED
        self.placement = {}
        self.prefill_start_time = None
        self.prefill_done_time = None
        self.decode_exec_time = 0.0
        self.evictions += 1
