"""Provide parallel strategies and cost-model coefficient types."""

# Authors: The espsim developers
# License: AGPL

import re
from dataclasses import dataclass
from typing import NamedTuple, Sequence, Tuple

import numpy as np

from ..utils import raise_error


__all__ = [
    "Strategy",
    "CostCoefficients",
    "DecodeCoefficients",
    "ProfileSample",
]

_LABEL = re.compile(r"^sp(\d+)-tp(\d+)$")


class Strategy(NamedTuple):
    """Parallel strategy of a group.

    Elastic sequence-parallel groups of ``d`` instances use ``(d, 1)``,
    tensor-parallel groups ``(1, d)`` and static hybrids ``(sp, tp)``.

    """

    sp: int
    tp: int = 1

    @property
    def dop(self) -> int:
        """Number of instances the strategy spans."""
        return self.sp * self.tp

    @property
    def label(self) -> str:
        """Text label such as ``"sp4-tp1"``."""
        return f"sp{self.sp}-tp{self.tp}"

    @classmethod
    def parse(cls, label: str) -> "Strategy":
        """Parse a strategy label.

        Parameters
        ----------
        label : str
            The label, e.g. ``"sp2-tp4"``.

        Returns
        -------
        Strategy
            The parsed strategy.

        """
        match = _LABEL.match(label)
        if match is None:
            raise_error(f"Invalid strategy label: {label!r}")
        return cls(int(match.group(1)), int(match.group(2)))


@dataclass(frozen=True)
class CostCoefficients:
    """Prefill iteration-time coefficients of one strategy.

    The iteration time of a batch with lengths ``l`` is
    ``alpha + beta * sum(l) + gamma * sum(l**2)`` in ms.

    """

    alpha: float
    beta: float
    gamma: float

    def __post_init__(self) -> None:
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise_error(
                "Cost coefficients must be non-negative, got "
                f"({self.alpha}, {self.beta}, {self.gamma})"
            )

    def predict(self, lengths: Sequence[int]) -> float:
        """Predict the prefill time of a batch.

        Parameters
        ----------
        lengths : sequence of int
            Input lengths of the batch.

        Returns
        -------
        float
            Iteration time in ms.

        """
        lengths = np.asarray(lengths, dtype=np.float64)
        return float(
            self.alpha
            + self.beta * lengths.sum()
            + self.gamma * np.square(lengths).sum()
        )

    def as_tuple(self) -> Tuple[float, float, float]:
        """Get ``(alpha, beta, gamma)``."""
        return (self.alpha, self.beta, self.gamma)


@dataclass(frozen=True)
class DecodeCoefficients:
    """Decoding iteration-time coefficients.

    Parameters
    ----------
    alpha : float
        Constant per-step overhead in ms.
    beta : float
        Cost per request in the batch in ms.
    gamma : float
        Cost per resident KV token in ms, divided by the DoP.
    threshold : int
        Batch size beyond which decoding becomes compute bound.

    """

    alpha: float
    beta: float
    gamma: float
    threshold: int = 64

    def __post_init__(self) -> None:
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise_error("Decode coefficients must be non-negative")
        if self.threshold < 1:
            raise_error(
                f"Decode batch threshold must be >= 1, got {self.threshold}"
            )


@dataclass(frozen=True)
class ProfileSample:
    """One profiled prefill iteration."""

    strategy: Strategy
    lengths: Tuple[int, ...]
    measured_time: float

    def __post_init__(self) -> None:
        if self.measured_time <= 0:
            raise_error(
                f"Measured time must be positive, got {self.measured_time}"
            )
        if len(self.lengths) == 0:
            raise_error("A profile sample needs at least one request")
