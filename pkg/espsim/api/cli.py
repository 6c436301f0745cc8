"""Provide functions for cli."""

# Authors: The espsim developers
# License: AGPL

import pathlib
import sys
from contextlib import contextmanager
from dataclasses import replace
from typing import Iterator, List, Optional, Tuple, Union

import click

from ..simulation import SimConfig, gen_trace, load_trace
from ..utils.logging import configure_logging, logger
from .functions import fit_sib as api_fit_sib
from .functions import get_trace
from .functions import run as api_run
from .functions import sweep as api_sweep
from .parser import parse_yaml
from .utils import (
    _get_dependency_information,
    _get_environment_information,
    _get_espsim_version,
    _get_python_information,
    _get_system_information,
    yaml,
)


def _validate_verbose(
    ctx: click.Context, param: str, value: str
) -> Union[str, int]:
    """Validate verbose option.

    Parameters
    ----------
    ctx : click.Context
        The context of the command.
    param : str
        The parameter to validate.
    value : str
        The value to validate.

    Returns
    -------
    str or int
        The validated value.

    """
    if isinstance(value, int):
        return value

    valid_strings = ["error", "warning", "info", "debug"]
    if isinstance(value, str) and value.lower() in valid_strings:
        return value.upper()

    try:
        value = int(value)  # type: ignore
        return value
    except ValueError:
        pass

    raise click.BadParameter(
        f"verbose must be one of {valid_strings} or an integer"
    )


def _parse_gen(
    ctx: click.Context, param: str, value: Optional[str]
) -> Optional[Tuple[str, float, int]]:
    """Parse the ``dist,rate,n`` generator option.

    Parameters
    ----------
    ctx : click.Context
        The context of the command.
    param : str
        The parameter to validate.
    value : str or None
        The value to validate.

    Returns
    -------
    tuple of (str, float, int) or None
        The distribution, rate and number of requests.

    """
    if value is None:
        return None
    parts = value.split(",")
    try:
        if len(parts) != 3:
            raise ValueError("expected three fields")
        return parts[0].strip(), float(parts[1]), int(parts[2])
    except ValueError as e:
        raise click.BadParameter(
            f"expected DIST,RATE,N such as sharegpt,10,1000 ({e})"
        ) from e


def _parse_rates(
    ctx: click.Context, param: str, value: str
) -> List[float]:
    """Parse a comma-separated list of rates.

    Parameters
    ----------
    ctx : click.Context
        The context of the command.
    param : str
        The parameter to validate.
    value : str
        The value to validate.

    Returns
    -------
    list of float
        The rates.

    """
    try:
        rates = [float(x) for x in value.split(",") if x.strip()]
    except ValueError as e:
        raise click.BadParameter(f"rates must be numbers ({e})") from e
    if not rates or any(x <= 0 for x in rates):
        raise click.BadParameter("rates must be positive numbers")
    return rates


@contextmanager
def _runtime_errors() -> Iterator[None]:
    """Turn library errors into a clean exit with status 1."""
    try:
        yield
    except (ValueError, RuntimeError, KeyError, OSError) as e:
        raise click.ClickException(str(e)) from e


def _load_config(
    filepath: Optional[pathlib.Path],
    policy: Optional[str],
    seed: Optional[int],
) -> SimConfig:
    """Build the configuration from a file and command-line overrides.

    Parameters
    ----------
    filepath : pathlib.Path or None
        The configuration file; defaults are used if None.
    policy : str or None
        Policy spec overriding the file.
    seed : int or None
        Seed overriding the file.

    Returns
    -------
    SimConfig
        The configuration.

    """
    contents = {} if filepath is None else parse_yaml(filepath)
    config = SimConfig.from_dict(contents)
    if policy is not None:
        config = replace(config, policy=policy, policy_params={})
        config.policy_kind()
    if seed is not None:
        config = replace(config, seed=seed)
    return config


_config_option = click.option(
    "--config",
    "filepath",
    type=click.Path(
        exists=True, readable=True, dir_okay=False, path_type=pathlib.Path
    ),
    help="YAML configuration file.",
)
_verbose_option = click.option(
    "-v",
    "--verbose",
    type=click.UNPROCESSED,
    callback=_validate_verbose,
    default="info",
)


@click.group()
def cli() -> None:  # pragma: no cover
    """CLI for the elastic sequence parallelism serving simulator."""


@cli.command()
@_config_option
@click.option(
    "--trace",
    "trace_path",
    type=click.Path(
        exists=True, readable=True, dir_okay=False, path_type=pathlib.Path
    ),
    help="Trace file with one request per line.",
)
@click.option(
    "--gen",
    callback=_parse_gen,
    help="Generate the trace: DIST,RATE,N (needs --seed).",
)
@click.option("--policy", type=str, help="Policy spec, e.g. chunked:2048.")
@click.option("--seed", type=int, help="Seed of the generated trace.")
@click.option(
    "--out",
    type=click.Path(file_okay=False, path_type=pathlib.Path),
    help="Directory for the report tables and the event log.",
)
@_verbose_option
def run(
    filepath: Optional[pathlib.Path],
    trace_path: Optional[pathlib.Path],
    gen: Optional[Tuple[str, float, int]],
    policy: Optional[str],
    seed: Optional[int],
    out: Optional[pathlib.Path],
    verbose: Union[str, int],
) -> None:
    """Run command for CLI.

    \f

    Parameters
    ----------
    filepath : pathlib.Path or None
        The filepath to the configuration file.
    trace_path : pathlib.Path or None
        The trace file.
    gen : tuple or None
        Distribution, rate and size of a generated trace.
    policy : str or None
        Policy spec overriding the configuration.
    seed : int or None
        Seed of the generated trace.
    out : pathlib.Path or None
        Output directory.
    verbose : click.Choice
        The verbosity level: warning, info or debug (default "info").

    """
    configure_logging(level=verbose)
    if trace_path is not None and gen is not None:
        raise click.UsageError("Use either --trace or --gen, not both")
    if gen is not None and seed is None:
        raise click.UsageError("--seed is required with --gen")
    with _runtime_errors():
        config = _load_config(filepath, policy, seed)
        if trace_path is not None:
            trace = load_trace(trace_path)
        elif gen is not None:
            distribution, rate, n = gen
            trace = gen_trace(
                rate=rate, distribution=distribution, n=n, seed=config.seed
            )
        elif config.trace:
            trace = get_trace(config)
        else:
            raise click.UsageError(
                "No trace: give --trace, --gen or a trace section"
            )
        storage = None
        if out is not None:
            storage = {"kind": "CSVReportStorage", "uri": str(out)}
        log, report = api_run(config, trace, storage=storage)
        if out is not None:
            log.to_jsonl(out / "events.jsonl")
            logger.info(f"Event log written to {out / 'events.jsonl'}")
    table = report.to_frame().T
    table.columns = [config.policy]
    click.echo(table.to_string())


@cli.command()
@_config_option
@click.option(
    "--rates",
    required=True,
    callback=_parse_rates,
    help="Comma-separated offered rates in requests per second.",
)
@click.option(
    "--dist",
    "distribution",
    default="sharegpt",
    show_default=True,
    help="Length distribution of the generated traces.",
)
@click.option(
    "--n", type=int, default=1000, show_default=True, help="Requests per rate."
)
@click.option("--seed", type=int, required=True, help="Seed of every trace.")
@click.option("--max-length", type=int, help="Cap on sequence lengths.")
@click.option("--policy", type=str, help="Policy spec, e.g. disagg:4+4.")
@click.option("--jobs", type=click.IntRange(min=1), default=1)
@click.option(
    "--out",
    type=click.Path(file_okay=False, path_type=pathlib.Path),
    help="Directory for the sweep table.",
)
@_verbose_option
def sweep(
    filepath: Optional[pathlib.Path],
    rates: List[float],
    distribution: str,
    n: int,
    seed: int,
    max_length: Optional[int],
    policy: Optional[str],
    jobs: int,
    out: Optional[pathlib.Path],
    verbose: Union[str, int],
) -> None:
    """Sweep command for CLI.

    \f

    Parameters
    ----------
    filepath : pathlib.Path or None
        The filepath to the configuration file.
    rates : list of float
        The offered rates.
    distribution : str
        Length distribution of the generated traces.
    n : int
        Requests per rate.
    seed : int
        Seed of every trace.
    max_length : int or None
        Cap on sequence lengths.
    policy : str or None
        Policy spec overriding the configuration.
    jobs : int
        Worker processes.
    out : pathlib.Path or None
        Output directory.
    verbose : click.Choice
        The verbosity level: warning, info or debug (default "info").

    """
    configure_logging(level=verbose)
    with _runtime_errors():
        config = _load_config(filepath, policy, seed)
        storage = None
        if out is not None:
            storage = {"kind": "CSVReportStorage", "uri": str(out)}
        frame = api_sweep(
            config,
            rates=rates,
            distribution=distribution,
            n=n,
            seed=seed,
            max_length=max_length,
            jobs=jobs,
            storage=storage,
        )
    columns = [
        "rate",
        "slo_attainment",
        "mean_latency",
        "p90_latency",
        "token_throughput",
    ]
    click.echo(frame[columns].to_string(index=False))
    click.echo(f"P90 goodput: {frame.attrs['p90_goodput']} req/s")


@cli.command("fit-sib")
@click.option(
    "--profiles",
    required=True,
    type=click.Path(
        exists=True, readable=True, dir_okay=False, path_type=pathlib.Path
    ),
    help="Profile samples in the SIB file layout.",
)
@click.option(
    "--out",
    required=True,
    type=click.Path(dir_okay=False, path_type=pathlib.Path),
    help="Where to write the fitted SIB.",
)
@click.option(
    "--holdout-every",
    type=click.IntRange(min=0),
    default=0,
    help="Hold out every k-th sample per strategy for evaluation.",
)
@_verbose_option
def fit_sib(
    profiles: pathlib.Path,
    out: pathlib.Path,
    holdout_every: int,
    verbose: Union[str, int],
) -> None:
    """Fit-sib command for CLI.

    \f

    Parameters
    ----------
    profiles : pathlib.Path
        The profiles file.
    out : pathlib.Path
        The fitted SIB file.
    holdout_every : int
        Hold out every k-th sample per strategy.
    verbose : click.Choice
        The verbosity level: warning, info or debug (default "info").

    """
    configure_logging(level=verbose)
    with _runtime_errors():
        _, accuracy = api_fit_sib(
            profiles, out=out, holdout_every=holdout_every
        )
    click.echo(accuracy.to_string())


@cli.command()
@click.option("--long", "long_", is_flag=True)
def wtf(long_: bool) -> None:
    """Wtf command for CLI.

    \f

    Parameters
    ----------
    long_ : bool
        Whether to report long version or not.

    """
    report = {
        "espsim": _get_espsim_version(),
        "python": _get_python_information(),
        "dependencies": _get_dependency_information(long_=long_),
        "system": _get_system_information(),
        "environment": _get_environment_information(long_=long_),
    }
    yaml.dump(report, stream=sys.stdout)
