"""Provide functions for running simulations, sweeps and SIB fitting."""

# Authors: The espsim developers
# License: AGPL

import typing
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from ..costmodel import (
    ProfileSample,
    ScalingInfoBase,
    Strategy,
    evaluate_fit,
    fit_coefficients,
)
from ..metrics import MetricsReport, compute_metrics, p90_goodput
from ..pipeline.registry import build
from ..simulation import (
    EventLog,
    SimConfig,
    Simulator,
    TraceRecord,
    gen_trace,
    load_trace,
)
from ..storage.base import BaseReportStorage
from ..utils import logger, raise_error
from ..utils.exceptions import ConfigError


__all__ = ["get_trace", "run", "sweep", "fit_sib"]


_TRACE_KEYS = {"path", "distribution", "rate", "n", "seed", "max_length"}


def _get_storage(storage_config: Dict) -> BaseReportStorage:
    """Get storage.

    Parameters
    ----------
    storage_config : dict
        The config to get the storage using.

    Returns
    -------
    BaseReportStorage
        The storage.

    """
    storage_params = dict(storage_config)
    if "kind" not in storage_params:
        raise_error("The storage section needs a 'kind'", klass=ConfigError)
    storage_kind = storage_params.pop("kind")
    storage = build(
        step="storage",
        name=storage_kind,
        baseclass=BaseReportStorage,
        init_params=storage_params,
    )
    return typing.cast(BaseReportStorage, storage)


def get_trace(config: SimConfig) -> List[TraceRecord]:
    """Get the trace described by the ``trace`` section of a config.

    The section holds either ``path`` or the generator parameters
    ``distribution``, ``rate`` and ``n`` (plus optional ``seed`` and
    ``max_length``). Generated traces use the config seed unless the
    section sets one.

    Parameters
    ----------
    config : SimConfig
        The configuration.

    Returns
    -------
    list of TraceRecord
        The trace.

    Raises
    ------
    ConfigError
        If the section is missing or incomplete.

    """
    section = dict(config.trace)
    unknown = set(section) - _TRACE_KEYS
    if unknown:
        raise_error(
            f"Unknown keys in section 'trace': {sorted(unknown)}",
            klass=ConfigError,
        )
    if "path" in section:
        return load_trace(section["path"])
    missing = {"distribution", "rate", "n"} - set(section)
    if missing:
        raise_error(
            "The trace section needs a 'path' or the generator keys "
            f"'distribution', 'rate' and 'n' (missing {sorted(missing)})",
            klass=ConfigError,
        )
    return gen_trace(
        rate=float(section["rate"]),
        distribution=str(section["distribution"]),
        n=int(section["n"]),
        seed=int(section.get("seed", config.seed)),
        max_length=section.get("max_length"),
    )


def run(
    config: SimConfig,
    trace: Sequence[TraceRecord],
    storage: Optional[Dict] = None,
    name: Optional[str] = None,
) -> Tuple[EventLog, MetricsReport]:
    """Simulate one trace and compute its metrics.

    Parameters
    ----------
    config : SimConfig
        The configuration.
    trace : sequence of TraceRecord
        The requests to serve.
    storage : dict, optional
        Storage to use. Must have a key ``kind`` with the kind of storage
        to use. All other keys are passed to the storage init function. If
        None, the ``storage`` section of ``config`` is used when set
        (default None).
    name : str, optional
        Name of the run in the storage; the policy spec if None
        (default None).

    Returns
    -------
    EventLog
        The event log.
    MetricsReport
        The metrics of the run.

    """
    sib = config.get_sib()
    logger.info(
        f"Running {len(trace)} requests with policy {config.policy} on "
        f"{config.n_instances} instances"
    )
    log = Simulator(config, sib=sib).run(trace)
    report = compute_metrics(log, config, sib=sib)
    if storage is None and config.storage:
        storage = config.storage
    if storage:
        if name is None:
            name = config.policy
        storage_object = _get_storage(storage)
        storage_object.store_metrics(name, report)
        storage_object.store_requests(name, report.requests)
        logger.info(f"Stored run {name} in {storage_object}")
    return log, report


def _sweep_point(
    args: Tuple[SimConfig, float, str, int, int, Optional[int]]
) -> Dict:
    """Run one rate of a sweep."""
    config, rate, distribution, n, seed, max_length = args
    trace = gen_trace(
        rate=rate,
        distribution=distribution,
        n=n,
        seed=seed,
        max_length=max_length,
    )
    _, report = run(config, trace, storage={})
    return {"rate": rate, **report.to_dict()}


def sweep(
    config: SimConfig,
    rates: Sequence[float],
    distribution: str,
    n: int,
    seed: int,
    max_length: Optional[int] = None,
    jobs: int = 1,
    storage: Optional[Dict] = None,
    name: Optional[str] = None,
) -> pd.DataFrame:
    """Run one simulation per offered rate.

    Every point generates its own trace with the same seed and runs an
    independent engine, so points may run on parallel worker processes.

    Parameters
    ----------
    config : SimConfig
        The configuration.
    rates : sequence of float
        Offered rates in requests per second.
    distribution : str
        Length distribution of the generated traces.
    n : int
        Requests per trace.
    seed : int
        Seed of every trace.
    max_length : int, optional
        Cap on the sequence length of generated requests (default None).
    jobs : int, optional
        Worker processes; points run in this process if 1 (default 1).
    storage : dict, optional
        Storage to use, as in :func:`run` (default None).
    name : str, optional
        Name of the sweep in the storage; the policy spec if None
        (default None).

    Returns
    -------
    pandas.DataFrame
        One row per rate in ascending rate order, with the aggregates of
        :class:`~espsim.metrics.MetricsReport`. The P90 goodput is in
        ``attrs["p90_goodput"]``.

    Raises
    ------
    ValueError
        If ``rates`` is empty or ``jobs`` is not positive.

    """
    if len(rates) == 0:
        raise_error("A sweep needs at least one rate")
    if jobs < 1:
        raise_error(f"jobs must be >= 1, got {jobs}")
    rates = sorted(float(x) for x in rates)
    # Load the SIB once for every worker
    config = replace(config, sib=config.get_sib())
    points = [
        (config, rate, distribution, n, seed, max_length) for rate in rates
    ]
    logger.info(f"Sweeping {len(rates)} rates with {jobs} job(s)")
    if jobs == 1:
        rows = [_sweep_point(x) for x in tqdm(points, desc="sweep")]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as executor:
            rows = list(
                tqdm(
                    executor.map(_sweep_point, points),
                    total=len(points),
                    desc="sweep",
                )
            )
    frame = pd.DataFrame(rows)
    goodput = p90_goodput(frame["rate"], frame["slo_attainment"])
    frame.attrs["p90_goodput"] = goodput
    logger.info(f"P90 goodput of {config.policy}: {goodput} req/s")
    if storage is None and config.storage:
        storage = config.storage
    if storage:
        if name is None:
            name = config.policy
        storage_object = _get_storage(storage)
        storage_object.store_sweep(name, frame)
        logger.info(f"Stored sweep {name} in {storage_object}")
    return frame


def fit_sib(
    profiles: Union[str, Path],
    out: Optional[Union[str, Path]] = None,
    holdout_every: int = 0,
) -> Tuple[ScalingInfoBase, pd.DataFrame]:
    """Fit a SIB from profile samples.

    The profiles file has the SIB layout; every strategy with samples is
    refit from them, other strategies keep their coefficients. With
    ``holdout_every=k``, every k-th sample of a strategy is held out of
    the fit and only used to measure the prediction error.

    Parameters
    ----------
    profiles : str or pathlib.Path
        The profiles file.
    out : str or pathlib.Path, optional
        Where to write the fitted SIB (default None).
    holdout_every : int, optional
        Hold out every k-th sample per strategy; 0 fits and evaluates on
        every sample (default 0).

    Returns
    -------
    ScalingInfoBase
        The fitted SIB.
    pandas.DataFrame
        Per strategy: sample counts, coefficients and the mean and max
        relative prediction error.

    Raises
    ------
    ValueError
        If ``holdout_every`` is 1 or negative.

    """
    if holdout_every < 0 or holdout_every == 1:
        raise_error(
            f"holdout_every must be 0 or >= 2, got {holdout_every}"
        )
    loaded = ScalingInfoBase.load(profiles)
    by_strategy: Dict[Strategy, List[ProfileSample]] = defaultdict(list)
    for sample in loaded.samples:
        by_strategy[sample.strategy].append(sample)
    if not by_strategy:
        raise_error(f"No profile samples in {profiles}")

    prefill = {s: loaded.coefficients(s) for s in loaded.strategies}
    rows = []
    for strategy, samples in sorted(by_strategy.items()):
        if holdout_every:
            held = samples[holdout_every - 1 :: holdout_every]
            train = [
                x
                for i, x in enumerate(samples)
                if (i + 1) % holdout_every != 0
            ]
        else:
            held = train = samples
        coef = fit_coefficients(train)
        prefill[strategy] = coef
        errors = evaluate_fit(coef, held)
        rows.append(
            {
                "strategy": strategy.label,
                "n_fit": len(train),
                "n_eval": len(held),
                "alpha": coef.alpha,
                "beta": coef.beta,
                "gamma": coef.gamma,
                "mean_rel_error": float(np.mean(errors)),
                "max_rel_error": float(np.max(errors)),
            }
        )
    sib = ScalingInfoBase(
        prefill,
        loaded.decode,
        tipping=loaded.tipping_points,
        samples=loaded.samples,
    )
    accuracy = pd.DataFrame(rows).set_index("strategy")
    logger.info(
        f"Fitted {len(rows)} strategies, worst mean relative error "
        f"{accuracy['mean_rel_error'].max():.3g}"
    )
    if out is not None:
        sib.save(out)
    return sib, accuracy
