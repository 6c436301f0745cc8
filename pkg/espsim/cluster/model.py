"""Provide model geometry and KV-cache footprint helpers."""

# Authors: The espsim developers
# License: AGPL

from dataclasses import dataclass
from typing import Any, Dict

from ..utils import raise_error
from ..utils.exceptions import ConfigError


__all__ = ["ModelConfig", "kv_bytes_per_token", "tokens_for_memory"]


@dataclass(frozen=True)
class ModelConfig:
    """Geometry of the served model.

    Parameters
    ----------
    layers : int
        Number of transformer layers.
    hidden_dim : int
        Total key/value hidden size per layer.
    kv_heads : int
        Number of key/value heads.
    bytes_per_element : int
        Size of one cached element in bytes.
    max_context : int
        Longest supported sequence in tokens.

    Raises
    ------
    ConfigError
        If any field is not a positive integer.

    """

    layers: int = 32
    hidden_dim: int = 4096
    kv_heads: int = 32
    bytes_per_element: int = 2
    max_context: int = 1_000_000

    def __post_init__(self) -> None:
        for name in [
            "layers",
            "hidden_dim",
            "kv_heads",
            "bytes_per_element",
            "max_context",
        ]:
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise_error(
                    f"ModelConfig.{name} must be a positive integer, "
                    f"got {value!r}",
                    klass=ConfigError,
                )

    @classmethod
    def from_dict(cls, params: Dict[str, Any]) -> "ModelConfig":
        """Create the geometry from a configuration section.

        Parameters
        ----------
        params : dict
            The ``model`` section of the configuration.

        Returns
        -------
        ModelConfig
            The validated geometry.

        """
        unknown = set(params) - set(cls.__dataclass_fields__)
        if unknown:
            raise_error(
                f"Unknown model keys: {sorted(unknown)}", klass=ConfigError
            )
        return cls(**params)


def kv_bytes_per_token(cfg: ModelConfig) -> int:
    """Compute the KV-cache footprint of one token.

    Keys and values are cached for every layer, so one token costs
    ``2 * layers * hidden_dim * bytes_per_element`` bytes.

    Parameters
    ----------
    cfg : ModelConfig
        The model geometry.

    Returns
    -------
    int
        Bytes per cached token.

    """
    return 2 * cfg.layers * cfg.hidden_dim * cfg.bytes_per_element


def tokens_for_memory(cfg: ModelConfig, memory_gb: float) -> int:
    """Convert a per-instance KV memory budget to token slots.

    Parameters
    ----------
    cfg : ModelConfig
        The model geometry.
    memory_gb : float
        KV memory in GiB.

    Returns
    -------
    int
        Whole token slots that fit in ``memory_gb``.

    """
    if memory_gb <= 0:
        raise_error(
            f"KV memory must be positive, got {memory_gb}", klass=ConfigError
        )
    return int(memory_gb * 2**30 // kv_bytes_per_token(cfg))
