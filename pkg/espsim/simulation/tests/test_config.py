"""Provide tests for the simulation configuration."""

# Authors: The espsim developers
# License: AGPL

import pytest

from espsim.api.utils import yaml
from espsim.cluster import ModelConfig, tokens_for_memory
from espsim.data import get_example_config_path
from espsim.policies import ChunkedPolicy, ESPPolicy
from espsim.simulation import SimConfig
from espsim.testing import uniform_sib
from espsim.utils.exceptions import ConfigError


def test_config_from_example() -> None:
    """Test reading the bundled example configuration."""
    contents = yaml.load(get_example_config_path())
    config = SimConfig.from_dict(contents)
    assert config.n_instances == 8
    assert config.kv_capacity == 120_000
    assert config.bandwidth.inter_node == 200.0
    assert config.on_oversized == "reject"
    assert config.storage == {"kind": "CSVReportStorage", "uri": "results"}
    assert isinstance(config.build_policy(), ESPPolicy)


def test_config_roundtrip() -> None:
    """Test that sections written by to_dict read back equal."""
    config = SimConfig(
        n_instances=4, policy="chunked:512", slo_absolute_ms=900.0
    )
    assert SimConfig.from_dict(config.to_dict()) == config


def test_config_kv_memory() -> None:
    """Test sizing instances from a memory budget."""
    config = SimConfig.from_dict(
        {"cluster": {"instances": 2, "kv_memory_gb": 8}}
    )
    assert config.kv_capacity == tokens_for_memory(ModelConfig(), 8)
    assert config.kv_capacity == 16_384


@pytest.mark.parametrize(
    "policy, expected",
    [
        ({"kind": "chunked:256"}, {"chunk_size": 256}),
        ({"kind": "chunked", "chunk_size": 64, "dop": 2},
         {"chunk_size": 64, "dop": 2}),
    ],
)
def test_config_policy_section(policy: dict, expected: dict) -> None:
    """Test both ways of giving policy parameters.

    Parameters
    ----------
    policy : dict
        The parametrized policy section.
    expected : dict
        The expected constructor parameters.

    """
    config = SimConfig.from_dict({"policy": policy})
    assert config.policy_kind() == ("chunked", expected)
    built = config.build_policy()
    assert isinstance(built, ChunkedPolicy)
    assert built.chunk_size == expected["chunk_size"]


@pytest.mark.parametrize(
    "contents, match",
    [
        ({"cluster": {"instances": 0}}, "at least one instance"),
        ({"cluster": {"gpus": 8}}, "Unknown keys in section 'cluster'"),
        ({"slo": {"multiplier": 0}}, "must be positive"),
        ({"simulation": {"on_oversized": "drop"}}, "on_oversized"),
        ({"simulation": {"dp_bounds": "tight"}}, "dp_bounds"),
        ({"policy": {"kind": "esp:3"}}, "Invalid policy spec"),
        ({"policy": {"chunk_size": 3}}, "needs a 'kind'"),
        ({"bandwidth": {"intra_node": -1.0}}, "Invalid bandwidth"),
        ({"extra": {}}, "Unknown keys"),
        ({"cluster": 8}, "must be a mapping"),
        (
            {"cluster": {"kv_capacity_tokens": 8, "kv_memory_gb": 1}},
            "either",
        ),
    ],
)
def test_config_errors(contents: dict, match: str) -> None:
    """Test invalid configurations.

    Parameters
    ----------
    contents : dict
        The parametrized configuration.
    match : str
        The expected error message.

    """
    with pytest.raises(ConfigError, match=match):
        SimConfig.from_dict(contents)


def test_config_sib() -> None:
    """Test loading the bundled SIB once and keeping given SIBs."""
    config = SimConfig()
    sib = config.get_sib()
    assert sib is config.get_sib()
    assert sib.max_sp == 16
    given = uniform_sib(2)
    assert SimConfig(sib=given).get_sib() is given
    assert SimConfig(sib=given).to_dict()["sib"] == {"path": "<in-memory>"}
