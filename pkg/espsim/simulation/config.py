"""Provide the simulation configuration."""

# Authors: The espsim developers
# License: AGPL

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

from ..cluster import (
    ClusterState,
    KVCachePool,
    ModelConfig,
    tokens_for_memory,
)
from ..costmodel import BandwidthModel, ScalingInfoBase
from ..data import load_sib
from ..pipeline.registry import build
from ..policies import BasePolicy, parse_policy_spec
from ..utils import logger, raise_error
from ..utils.exceptions import ConfigError


__all__ = ["SimConfig"]


_SECTIONS = {
    "cluster",
    "model",
    "sib",
    "bandwidth",
    "policy",
    "slo",
    "simulation",
    "storage",
    "trace",
}

_SIMULATION_KEYS = {
    "seed",
    "exact_output_bound",
    "charge_overlapped_comm",
    "enable_scale_up",
    "on_oversized",
    "dp_bounds",
    "check_invariants",
}


def _section(contents: Dict, name: str) -> Dict:
    section = contents.get(name)
    if section is None:
        return {}
    if not isinstance(section, dict):
        raise_error(
            f"Section {name!r} must be a mapping, got {section!r}",
            klass=ConfigError,
        )
    return dict(section)


def _check_keys(section: Dict, name: str, allowed: set) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise_error(
            f"Unknown keys in section {name!r}: {sorted(unknown)}",
            klass=ConfigError,
        )


@dataclass
class SimConfig:
    """Everything a simulation run needs besides the trace.

    Parameters
    ----------
    n_instances : int, optional
        Elastic instances in the cluster (default 8).
    kv_capacity : int, optional
        KV token slots per instance (default 120000).
    instances_per_node : int, optional
        Instances sharing one node (default 8).
    model : ModelConfig, optional
        Geometry of the served model.
    sib : str, pathlib.Path or ScalingInfoBase, optional
        A bundled SIB name, a SIB file or a loaded SIB (default
        "default").
    bandwidth : BandwidthModel, optional
        Bandwidth between instances.
    policy : str, optional
        Policy spec such as ``"esp"`` or ``"chunked:2048"``, or a plain
        registered name when ``policy_params`` is given (default "esp").
    policy_params : dict, optional
        Constructor parameters of the policy.
    seed : int, optional
        Seed of generated traces (default 0).
    slo_multiplier : float, optional
        SLO as a multiple of the unloaded latency (default 25.0).
    slo_absolute_ms : float, optional
        Absolute SLO in ms overriding the multiplier (default None).
    exact_output_bound : bool, optional
        Whether the scheduler sees the exact output length instead of
        the next power of two (default False).
    charge_overlapped_comm : bool, optional
        Whether decode steps pay for the KV transfers that normally
        overlap with compute (default False).
    enable_scale_up : bool, optional
        Whether decoding groups may grow (default True).
    on_oversized : {"raise", "reject"}, optional
        What to do with a request no group can ever hold (default
        "raise").
    dp_bounds : {"none", "monotone"}, optional
        Split-point search of the batching DP; "none" is exact,
        "monotone" bounds the search and may be suboptimal (default
        "none").
    check_invariants : bool, optional
        Whether to check the cluster invariants after every event
        (default False).
    storage : dict, optional
        Storage section, ``kind`` plus constructor parameters.
    trace : dict, optional
        Trace section, either ``path`` or generator parameters.

    Raises
    ------
    ConfigError
        If a field is out of range.

    """

    n_instances: int = 8
    kv_capacity: int = 120_000
    instances_per_node: int = 8
    model: ModelConfig = field(default_factory=ModelConfig)
    sib: Union[str, Path, ScalingInfoBase] = "default"
    bandwidth: BandwidthModel = field(default_factory=BandwidthModel)
    policy: str = "esp"
    policy_params: Dict[str, Any] = field(default_factory=dict)
    seed: int = 0
    slo_multiplier: float = 25.0
    slo_absolute_ms: Optional[float] = None
    exact_output_bound: bool = False
    charge_overlapped_comm: bool = False
    enable_scale_up: bool = True
    on_oversized: str = "raise"
    dp_bounds: str = "none"
    check_invariants: bool = False
    storage: Dict[str, Any] = field(default_factory=dict)
    trace: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.n_instances < 1:
            raise_error(
                f"The cluster needs at least one instance, got "
                f"{self.n_instances}",
                klass=ConfigError,
            )
        if self.kv_capacity < 1:
            raise_error(
                f"kv_capacity must be >= 1, got {self.kv_capacity}",
                klass=ConfigError,
            )
        if self.instances_per_node < 1:
            raise_error(
                f"instances_per_node must be >= 1, got "
                f"{self.instances_per_node}",
                klass=ConfigError,
            )
        if not self.slo_multiplier > 0:
            raise_error(
                f"The SLO multiplier must be positive, got "
                f"{self.slo_multiplier}",
                klass=ConfigError,
            )
        if self.slo_absolute_ms is not None and not self.slo_absolute_ms > 0:
            raise_error(
                f"The absolute SLO must be positive, got "
                f"{self.slo_absolute_ms}",
                klass=ConfigError,
            )
        if self.on_oversized not in ("raise", "reject"):
            raise_error(
                f"on_oversized must be 'raise' or 'reject', got "
                f"{self.on_oversized!r}",
                klass=ConfigError,
            )
        if self.dp_bounds not in ("none", "monotone"):
            raise_error(
                f"dp_bounds must be 'none' or 'monotone', got "
                f"{self.dp_bounds!r}",
                klass=ConfigError,
            )
        # Fails early on a malformed spec
        self.policy_kind()
        self._sib: Optional[ScalingInfoBase] = None

    @classmethod
    def from_dict(cls, contents: Dict[str, Any]) -> "SimConfig":
        """Create the configuration from parsed YAML sections.

        Parameters
        ----------
        contents : dict
            The parsed configuration file.

        Returns
        -------
        SimConfig
            The validated configuration.

        Raises
        ------
        ConfigError
            If a section is malformed or a key is unknown.

        """
        if not isinstance(contents, dict):
            raise_error(
                "The configuration must be a mapping", klass=ConfigError
            )
        _check_keys(contents, "<root>", _SECTIONS)
        params: Dict[str, Any] = {}

        cluster = _section(contents, "cluster")
        _check_keys(
            cluster,
            "cluster",
            {
                "instances",
                "instances_per_node",
                "kv_capacity_tokens",
                "kv_memory_gb",
            },
        )
        model = ModelConfig.from_dict(_section(contents, "model"))
        params["model"] = model
        if "instances" in cluster:
            params["n_instances"] = cluster["instances"]
        if "instances_per_node" in cluster:
            params["instances_per_node"] = cluster["instances_per_node"]
        if "kv_capacity_tokens" in cluster and "kv_memory_gb" in cluster:
            raise_error(
                "Set either kv_capacity_tokens or kv_memory_gb, not both",
                klass=ConfigError,
            )
        if "kv_capacity_tokens" in cluster:
            params["kv_capacity"] = cluster["kv_capacity_tokens"]
        elif "kv_memory_gb" in cluster:
            params["kv_capacity"] = tokens_for_memory(
                model, cluster["kv_memory_gb"]
            )

        sib = _section(contents, "sib")
        _check_keys(sib, "sib", {"path"})
        if "path" in sib:
            params["sib"] = sib["path"]

        bandwidth = _section(contents, "bandwidth")
        _check_keys(bandwidth, "bandwidth", {"intra_node", "inter_node"})
        try:
            params["bandwidth"] = BandwidthModel(
                instances_per_node=params.get("instances_per_node", 8),
                **bandwidth,
            )
        except ValueError as e:
            raise_error(
                f"Invalid bandwidth section: {e}",
                klass=ConfigError,
                exception=e,
            )

        policy = _section(contents, "policy")
        if policy:
            if "kind" not in policy:
                raise_error(
                    "The policy section needs a 'kind'", klass=ConfigError
                )
            params["policy"] = str(policy.pop("kind"))
            params["policy_params"] = policy

        slo = _section(contents, "slo")
        _check_keys(slo, "slo", {"multiplier", "absolute_ms"})
        if "multiplier" in slo:
            params["slo_multiplier"] = float(slo["multiplier"])
        if slo.get("absolute_ms") is not None:
            params["slo_absolute_ms"] = float(slo["absolute_ms"])

        simulation = _section(contents, "simulation")
        _check_keys(simulation, "simulation", _SIMULATION_KEYS)
        params.update(simulation)

        params["storage"] = _section(contents, "storage")
        params["trace"] = _section(contents, "trace")
        logger.debug(f"Configuration parameters: {params}")
        return cls(**params)

    def to_dict(self) -> Dict[str, Any]:
        """Get the configuration as YAML sections.

        Returns
        -------
        dict
            Sections in the layout :meth:`from_dict` reads.

        """
        sib = self.sib
        if isinstance(sib, ScalingInfoBase):
            sib = "<in-memory>"
        policy: Dict[str, Any] = {"kind": self.policy}
        policy.update(self.policy_params)
        slo: Dict[str, Any] = {"multiplier": self.slo_multiplier}
        if self.slo_absolute_ms is not None:
            slo["absolute_ms"] = self.slo_absolute_ms
        return {
            "cluster": {
                "instances": self.n_instances,
                "instances_per_node": self.instances_per_node,
                "kv_capacity_tokens": self.kv_capacity,
            },
            "model": dict(vars(self.model)),
            "sib": {"path": str(sib)},
            "bandwidth": {
                "intra_node": self.bandwidth.intra_node,
                "inter_node": self.bandwidth.inter_node,
            },
            "policy": policy,
            "slo": slo,
            "simulation": {k: getattr(self, k) for k in _SIMULATION_KEYS},
            "storage": dict(self.storage),
            "trace": dict(self.trace),
        }

    def policy_kind(self) -> Tuple[str, Dict[str, Any]]:
        """Get the registered policy name and its parameters.

        Returns
        -------
        str
            The registered name.
        dict
            Constructor parameters.

        """
        if self.policy_params:
            return self.policy, dict(self.policy_params)
        return parse_policy_spec(self.policy)

    def build_policy(self) -> BasePolicy:
        """Build a fresh policy object."""
        name, params = self.policy_kind()
        return build(
            step="policy", name=name, baseclass=BasePolicy, init_params=params
        )

    def build_cluster(self) -> ClusterState:
        """Build an empty cluster."""
        pool = KVCachePool([self.kv_capacity] * self.n_instances)
        return ClusterState(pool, instances_per_node=self.instances_per_node)

    def get_sib(self) -> ScalingInfoBase:
        """Get the SIB, loading it on first use."""
        if isinstance(self.sib, ScalingInfoBase):
            return self.sib
        if self._sib is None:
            self._sib = load_sib(self.sib)
        return self._sib
