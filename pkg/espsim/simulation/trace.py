"""Provide request traces: generation, loading and saving."""

# Authors: The espsim developers
# License: AGPL

import json
import re
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from scipy import stats

from ..utils import logger, raise_error
from ..utils.exceptions import TraceParseError, UnknownDistributionError


__all__ = [
    "LENGTH_RANGES",
    "TraceRecord",
    "gen_trace",
    "list_distributions",
    "load_trace",
    "save_trace",
]


# Input and output length ranges in tokens of the modeled datasets
LENGTH_RANGES: Dict[str, Tuple[Tuple[int, int], Tuple[int, int]]] = {
    "sharegpt": ((4, 2_300), (4, 1_024)),
    "leval": ((2_700, 210_500), (16, 512)),
    "lveval": ((15_100, 497_300), (4, 128)),
}

_ZIPF = re.compile(r"^zipf(?::|\()(?P<s>[0-9.]+)\)?$")
_ZIPF_GRID = 256


@dataclass(frozen=True)
class TraceRecord:
    """One request of a trace.

    Parameters
    ----------
    arrival_ms : float
        Arrival time in ms.
    input_len : int
        Prompt length in tokens.
    output_len : int
        Number of generated tokens.

    Raises
    ------
    ValueError
        If a length is below 1 or the arrival is negative.

    """

    arrival_ms: float
    input_len: int
    output_len: int

    def __post_init__(self) -> None:
        if self.input_len < 1 or self.output_len < 1:
            raise_error(
                f"Trace lengths must be >= 1, got input {self.input_len} "
                f"and output {self.output_len}"
            )
        if self.arrival_ms < 0:
            raise_error(
                f"Arrival times must be non-negative, got {self.arrival_ms}"
            )


def list_distributions() -> List[str]:
    """Get the names of the length distributions."""
    return [*sorted(LENGTH_RANGES), "mixed", "zipf:S"]


def _log_uniform(
    bounds: Tuple[int, int], size: int, rng: np.random.Generator
) -> np.ndarray:
    low, high = bounds
    values = stats.loguniform(low, high + 1).rvs(size=size, random_state=rng)
    return np.clip(np.floor(values).astype(np.int64), low, high)


def _component_lengths(
    components: np.ndarray, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray]:
    names = sorted(LENGTH_RANGES)
    inputs = np.zeros(len(components), dtype=np.int64)
    outputs = np.zeros(len(components), dtype=np.int64)
    for index, name in enumerate(names):
        mask = components == index
        count = int(mask.sum())
        if count == 0:
            continue
        input_range, output_range = LENGTH_RANGES[name]
        inputs[mask] = _log_uniform(input_range, count, rng)
        outputs[mask] = _log_uniform(output_range, count, rng)
    return inputs, outputs


def _zipf_lengths(
    s: float, n: int, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray]:
    # Rank 1 is the shortest length of the mixed support
    low = min(r[0][0] for r in LENGTH_RANGES.values())
    high = max(r[0][1] for r in LENGTH_RANGES.values())
    grid = np.unique(np.geomspace(low, high, _ZIPF_GRID).astype(np.int64))
    ranks = stats.zipfian(s, len(grid)).rvs(size=n, random_state=rng)
    inputs = grid[ranks - 1]
    outputs = np.zeros(n, dtype=np.int64)
    names = sorted(LENGTH_RANGES)
    for i, length in enumerate(inputs):
        # Output range of the dataset whose inputs lie closest
        owner = min(
            names,
            key=lambda name: max(
                LENGTH_RANGES[name][0][0] - length,
                length - LENGTH_RANGES[name][0][1],
                0,
            ),
        )
        outputs[i] = _log_uniform(LENGTH_RANGES[owner][1], 1, rng)[0]
    return inputs, outputs


def gen_trace(
    rate: float,
    distribution: str,
    n: int,
    seed: int = 0,
    max_length: Optional[int] = None,
) -> List[TraceRecord]:
    """Generate a trace with Poisson arrivals.

    Parameters
    ----------
    rate : float
        Mean arrival rate in requests per second.
    distribution : str
        One of ``"sharegpt"``, ``"leval"``, ``"lveval"``, ``"mixed"`` or
        ``"zipf:S"`` with ``S`` the Zipf exponent.
    n : int
        Number of requests.
    seed : int, optional
        Seed of the random generator (default 0).
    max_length : int, optional
        Cap on ``input_len + output_len``; longer requests have their
        prompt shortened (default None).

    Returns
    -------
    list of TraceRecord
        The trace sorted by arrival.

    Raises
    ------
    ValueError
        If ``rate`` is not positive or ``n`` is negative.
    UnknownDistributionError
        If ``distribution`` is unknown.

    """
    if not rate > 0:
        raise_error(f"The arrival rate must be positive, got {rate}")
    if n < 0:
        raise_error(f"The number of requests must be >= 0, got {n}")
    name = distribution.strip().lower().replace("-like", "")
    zipf = _ZIPF.match(name)
    if name not in LENGTH_RANGES and name != "mixed" and zipf is None:
        raise_error(
            f"Unknown length distribution {distribution!r}. Known "
            f"distributions are {list_distributions()}",
            klass=UnknownDistributionError,
        )
    if n == 0:
        return []
    rng = np.random.default_rng(seed)
    gaps = rng.exponential(1000.0 / rate, size=n)
    arrivals = np.cumsum(gaps) - gaps[0]
    if zipf is not None:
        inputs, outputs = _zipf_lengths(float(zipf.group("s")), n, rng)
    else:
        if name == "mixed":
            components = rng.integers(len(LENGTH_RANGES), size=n)
        else:
            components = np.full(n, sorted(LENGTH_RANGES).index(name))
        inputs, outputs = _component_lengths(components, rng)
    if max_length is not None:
        if max_length < 2:
            raise_error(f"max_length must be >= 2, got {max_length}")
        outputs = np.minimum(outputs, max_length - 1)
        inputs = np.minimum(inputs, max_length - outputs)
    logger.info(
        f"Generated {n} requests ({distribution}) at {rate} req/s "
        f"with seed {seed}"
    )
    return [
        TraceRecord(float(a), int(i), int(o))
        for a, i, o in zip(arrivals, inputs, outputs)
    ]


def save_trace(
    trace: List[TraceRecord], path: Union[str, Path]
) -> None:
    """Write a trace as line-delimited JSON.

    Parameters
    ----------
    trace : list of TraceRecord
        The trace.
    path : str or pathlib.Path
        The file to write.

    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as f:
        for record in trace:
            f.write(json.dumps(asdict(record), sort_keys=True) + "\n")
    logger.info(f"Saved {len(trace)} trace records to {path}")


def load_trace(path: Union[str, Path]) -> List[TraceRecord]:
    """Read a line-delimited JSON trace.

    Every non-empty line holds ``arrival_ms``, ``input_len`` and
    ``output_len``. Records are sorted stably by arrival.

    Parameters
    ----------
    path : str or pathlib.Path
        The file to read.

    Returns
    -------
    list of TraceRecord
        The trace sorted by arrival.

    Raises
    ------
    TraceParseError
        If a line is malformed; the message names the line and its
        content.

    """
    path = Path(path)
    if not path.is_file():
        raise_error(f"Trace file does not exist: {path.absolute()!s}")
    records = []
    with path.open() as f:
        for lineno, line in enumerate(f, start=1):
            content = line.strip()
            if not content:
                continue
            try:
                item = json.loads(content)
                record = TraceRecord(
                    arrival_ms=float(item["arrival_ms"]),
                    input_len=int(item["input_len"]),
                    output_len=int(item["output_len"]),
                )
            except (ValueError, KeyError, TypeError) as e:
                raise_error(
                    f"Malformed trace record at {path.name}:{lineno}: "
                    f"{content!r} ({e})",
                    klass=TraceParseError,
                    exception=e,
                )
            records.append(record)
    logger.info(f"Loaded {len(records)} trace records from {path}")
    return sorted(records, key=lambda r: r.arrival_ms)
