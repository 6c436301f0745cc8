"""Provide error classes raised by the simulator."""

# Authors: The espsim developers
# License: AGPL


class CapacityExceededError(RuntimeError):
    """An instance would hold more KV tokens than its capacity."""


class UnknownStrategyError(KeyError):
    """No coefficients are known for a parallel strategy."""

    def __str__(self) -> str:
        # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class UnderdeterminedError(ValueError):
    """The profile samples do not determine the cost coefficients."""


class InfeasiblePlanError(ValueError):
    """A placement plan does not fit its target instances."""


class InfeasibleHeadroomError(RuntimeError):
    """A source instance lacks the headroom for reactive migration."""


class MasterFullError(RuntimeError):
    """A master instance has no slot for the next decoded token."""


class InfeasibleError(RuntimeError):
    """No allocation or batching satisfies the KV capacity."""


class SizeLimitError(ValueError):
    """The problem is too large for exhaustive search."""


class NoCapacityError(RuntimeError):
    """A decoding group cannot place its next tokens."""


class RequestTooLargeError(RuntimeError):
    """A request cannot fit the instances a policy can give it."""


class UnknownDistributionError(ValueError):
    """The length distribution name is not known."""


class TraceParseError(ValueError):
    """A trace file line could not be parsed."""


class ConfigError(ValueError):
    """The simulation configuration is invalid."""


class EmptyLogError(ValueError):
    """The event log holds no requests."""
