"""Provide tests for cli."""

# Authors: The espsim developers
# License: AGPL

from pathlib import Path

import pandas as pd
import pytest
from click.testing import CliRunner

from espsim.api.cli import fit_sib, run, sweep, wtf
from espsim.api.utils import yaml
from espsim.costmodel import (
    CostCoefficients,
    DecodeCoefficients,
    ProfileSample,
    ScalingInfoBase,
    Strategy,
)
from espsim.data import get_example_config_path, get_example_trace_path
from espsim.simulation import EventLog


# Create click test runner
runner = CliRunner()


def _small_config(tmp_path: Path) -> Path:
    """Write a two-instance configuration.

    Parameters
    ----------
    tmp_path : pathlib.Path
        The path to the test directory.

    Returns
    -------
    pathlib.Path
        The configuration file.

    """
    contents = yaml.load(get_example_config_path())
    contents["cluster"]["instances"] = 2
    contents["storage"]["uri"] = "stored"
    outfile = tmp_path / "small.yaml"
    with open(outfile, "w") as f:
        yaml.dump(contents, f)
    return outfile


def test_run_command(tmp_path: Path) -> None:
    """Test run command on the bundled configuration and trace.

    Parameters
    ----------
    tmp_path : pathlib.Path
        The path to the test directory.

    """
    outdir = tmp_path / "out"
    result = runner.invoke(
        run,
        [
            "--config",
            str(get_example_config_path()),
            "--trace",
            str(get_example_trace_path()),
            "--out",
            str(outdir),
            "--verbose",
            "warning",
        ],
    )
    assert result.exit_code == 0, result.output
    assert "slo_attainment" in result.output
    metrics = pd.read_csv(outdir / "metrics.csv")
    assert metrics["run"].tolist() == ["esp"]
    assert metrics["n_finished"].tolist() == [20]
    assert (outdir / "metrics.jsonl").exists()
    assert len(pd.read_csv(outdir / "requests.csv")) == 20
    log = EventLog.from_jsonl(outdir / "events.jsonl")
    assert len(log.of_kind("finish")) == 20


def test_run_command_config_storage(tmp_path: Path) -> None:
    """Test run command stores next to the configuration file.

    Parameters
    ----------
    tmp_path : pathlib.Path
        The path to the test directory.

    """
    config = _small_config(tmp_path)
    result = runner.invoke(
        run,
        [
            "--config",
            str(config),
            "--gen",
            "sharegpt,4,12",
            "--seed",
            "3",
            "--policy",
            "chunked:256",
        ],
    )
    assert result.exit_code == 0, result.output
    metrics = pd.read_csv(tmp_path / "stored" / "metrics.csv")
    assert metrics["run"].tolist() == ["chunked:256"]
    assert metrics["n_requests"].tolist() == [12]


@pytest.mark.parametrize(
    "args, match",
    [
        (["--gen", "sharegpt,4,12"], "--seed is required"),
        (["--gen", "sharegpt,4"], "DIST,RATE,N"),
        (["--gen", "sharegpt,4,10", "--seed", "1", "--trace", "{trace}"],
         "either --trace or --gen"),
        ([], "No trace"),
        (["--verbose", "loud", "--gen", "sharegpt,1,1", "--seed", "1"],
         "verbose"),
    ],
)
def test_run_command_usage_errors(args: list, match: str) -> None:
    """Test usage errors exit with status 2.

    Parameters
    ----------
    args : list
        The parametrized command-line arguments.
    match : str
        The expected error message.

    """
    args = [x.format(trace=get_example_trace_path()) for x in args]
    result = runner.invoke(run, args)
    assert result.exit_code == 2
    assert match in result.output


@pytest.mark.parametrize(
    "args, match",
    [
        (["--policy", "esp:3"], "Invalid policy spec"),
        (["--policy", "static-tp:1"], "exceeds"),
    ],
)
def test_run_command_runtime_errors(
    tmp_path: Path, args: list, match: str
) -> None:
    """Test runtime errors exit with status 1.

    Parameters
    ----------
    tmp_path : pathlib.Path
        The path to the test directory.
    args : list
        The parametrized command-line arguments.
    match : str
        The expected error message.

    """
    trace = tmp_path / "long.jsonl"
    trace.write_text(
        '{"arrival_ms": 0.0, "input_len": 200000, "output_len": 10}\n'
    )
    result = runner.invoke(
        run,
        [
            "--trace",
            str(trace),
            "--verbose",
            "error",
            *args,
        ],
    )
    assert result.exit_code == 1
    assert match in result.output


def test_sweep_command(tmp_path: Path) -> None:
    """Test sweep command emits one row per rate.

    Parameters
    ----------
    tmp_path : pathlib.Path
        The path to the test directory.

    """
    outdir = tmp_path / "sweep"
    result = runner.invoke(
        sweep,
        [
            "--config",
            str(_small_config(tmp_path)),
            "--rates",
            "2,1,4",
            "--n",
            "10",
            "--seed",
            "4",
            "--out",
            str(outdir),
            "--verbose",
            "warning",
        ],
    )
    assert result.exit_code == 0, result.output
    assert "P90 goodput" in result.output
    stored = pd.read_csv(outdir / "sweep.csv")
    assert stored["rate"].tolist() == [1.0, 2.0, 4.0]
    assert stored["point"].tolist() == [0, 1, 2]


@pytest.mark.parametrize(
    "args",
    [
        ["--rates", "1,2"],
        ["--rates", "1,x", "--seed", "0"],
        ["--rates", "0,1", "--seed", "0"],
        ["--rates", "1", "--seed", "0", "--jobs", "0"],
    ],
)
def test_sweep_command_usage_errors(args: list) -> None:
    """Test invalid sweep options.

    Parameters
    ----------
    args : list
        The parametrized command-line arguments.

    """
    result = runner.invoke(sweep, args)
    assert result.exit_code == 2


def test_fit_sib_command(tmp_path: Path) -> None:
    """Test fit-sib command reproduces noiseless coefficients.

    Parameters
    ----------
    tmp_path : pathlib.Path
        The path to the test directory.

    """
    strategy = Strategy(4, 1)
    coef = CostCoefficients(32.0, 0.0195, 1.15e-7)
    samples = [
        ProfileSample(strategy, lengths, coef.predict(lengths))
        for lengths in [
            (128,),
            (4096,),
            (16384, 512),
            (65536,),
            (2048, 2048, 2048),
            (200_000,),
        ]
    ]
    profiles = tmp_path / "profiles.jsonl"
    ScalingInfoBase(
        {}, DecodeCoefficients(12.0, 0.05, 2e-5, 64), samples=samples
    ).save(profiles)
    out = tmp_path / "sib.jsonl"
    result = runner.invoke(
        fit_sib,
        ["--profiles", str(profiles), "--out", str(out), "-v", "warning"],
    )
    assert result.exit_code == 0, result.output
    assert "sp4-tp1" in result.output
    fitted = ScalingInfoBase.load(out).coefficients(strategy)
    assert fitted.as_tuple() == pytest.approx(coef.as_tuple(), rel=1e-6)


def test_fit_sib_command_missing_profiles(tmp_path: Path) -> None:
    """Test fit-sib command with a missing profiles file.

    Parameters
    ----------
    tmp_path : pathlib.Path
        The path to the test directory.

    """
    result = runner.invoke(
        fit_sib,
        ["--profiles", str(tmp_path / "nope.jsonl"), "--out", "sib.jsonl"],
    )
    assert result.exit_code == 2


def test_wtf_short() -> None:
    """Test short version of wtf command."""
    wtf_result = runner.invoke(wtf)
    assert wtf_result.exit_code == 0
    assert "espsim" in wtf_result.output
    assert "platform" in wtf_result.output


def test_wtf_long() -> None:
    """Test long version of wtf command."""
    wtf_long_result = runner.invoke(wtf, "--long")
    assert wtf_long_result.exit_code == 0
    assert "environment" in wtf_long_result.output
