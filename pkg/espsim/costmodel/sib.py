"""Provide the scaling information base (SIB)."""

# Authors: The espsim developers
# License: AGPL

import json
import math
from collections import defaultdict
from pathlib import Path
from typing import (
    Any,
    Dict,
    Iterable,
    List,
    Optional,
    Sequence,
    Tuple,
    Union,
)

import numpy as np
import pandas as pd

from ..utils import logger, raise_error
from ..utils.exceptions import ConfigError, UnknownStrategyError
from .coefficients import (
    CostCoefficients,
    DecodeCoefficients,
    ProfileSample,
    Strategy,
)
from .fitting import fit_coefficients


__all__ = ["ScalingInfoBase"]


def _is_set(value: Any) -> bool:
    if value is None:
        return False
    if isinstance(value, float) and math.isnan(value):
        return False
    return True


class ScalingInfoBase:
    """Cost models of every parallel strategy.

    Parameters
    ----------
    prefill : dict of Strategy to CostCoefficients
        Prefill coefficients per strategy.
    decode : DecodeCoefficients
        Decoding coefficients.
    tipping : dict of Strategy to float or float, optional
        Prefill iteration time (ms) past which a batch is compute bound,
        per strategy or one value for all (default None).
    samples : list of ProfileSample, optional
        Profile samples the coefficients came from (default None).

    """

    def __init__(
        self,
        prefill: Dict[Strategy, CostCoefficients],
        decode: DecodeCoefficients,
        tipping: Optional[Union[Dict[Strategy, float], float]] = None,
        samples: Optional[List[ProfileSample]] = None,
    ) -> None:
        self._prefill = {Strategy(*k): v for k, v in prefill.items()}
        self.decode = decode
        if tipping is None:
            tipping = {}
        elif not isinstance(tipping, dict):
            tipping = {s: float(tipping) for s in self._prefill}
        self._tipping = {Strategy(*k): float(v) for k, v in tipping.items()}
        self.samples = list(samples) if samples is not None else []

    def __repr__(self) -> str:
        """Represent object as string."""
        return (
            f"<{self.__class__.__name__} strategies="
            f"{[s.label for s in self.strategies]}>"
        )

    @property
    def strategies(self) -> List[Strategy]:
        """Known strategies, sorted by ``(tp, sp)``."""
        return sorted(self._prefill, key=lambda s: (s.tp, s.sp))

    @property
    def max_sp(self) -> int:
        """Largest sequence-parallel DoP with ``tp == 1``."""
        return max((s.sp for s in self._prefill if s.tp == 1), default=0)

    @property
    def tipping_points(self) -> Dict[Strategy, float]:
        """Configured tipping points per strategy."""
        return dict(self._tipping)

    def has(self, strategy: Strategy) -> bool:
        """Whether coefficients exist for ``strategy``."""
        return Strategy(*strategy) in self._prefill

    def coefficients(self, strategy: Strategy) -> CostCoefficients:
        """Get the prefill coefficients of ``strategy``.

        Raises
        ------
        UnknownStrategyError
            If the strategy is not in the SIB.

        """
        try:
            return self._prefill[Strategy(*strategy)]
        except KeyError as e:
            raise_error(
                f"No prefill coefficients for strategy "
                f"{Strategy(*strategy).label}",
                klass=UnknownStrategyError,
                exception=e,
            )

    def prefill_time(
        self, lengths: Sequence[int], strategy: Strategy
    ) -> float:
        """Predict the prefill time of a batch.

        Parameters
        ----------
        lengths : sequence of int
            Input lengths of the batch.
        strategy : Strategy
            The parallel strategy.

        Returns
        -------
        float
            Iteration time in ms.

        """
        return self.coefficients(strategy).predict(lengths)

    def chunk_time(
        self, chunks: Iterable[Tuple[int, int]], strategy: Strategy
    ) -> float:
        """Predict the prefill time of context chunks.

        A chunk of ``c`` tokens starting at offset ``p`` costs
        ``beta * c + gamma * ((p + c)**2 - p**2)``; the constant ``alpha``
        is paid once per iteration.

        Parameters
        ----------
        chunks : iterable of (int, int)
            ``(offset, tokens)`` of each chunk.
        strategy : Strategy
            The parallel strategy.

        Returns
        -------
        float
            Iteration time in ms, 0 if there is no chunk.

        """
        coef = self.coefficients(strategy)
        chunks = list(chunks)
        if not chunks:
            return 0.0
        total = coef.alpha
        for offset, tokens in chunks:
            total += coef.beta * tokens
            total += coef.gamma * ((offset + tokens) ** 2 - offset**2)
        return float(total)

    def tipping_point(self, strategy: Strategy) -> float:
        """Get the compute-bound tipping point of ``strategy`` in ms.

        Raises
        ------
        UnknownStrategyError
            If no tipping point is configured for the strategy.

        """
        try:
            return self._tipping[Strategy(*strategy)]
        except KeyError as e:
            raise_error(
                "No tipping point for strategy "
                f"{Strategy(*strategy).label}",
                klass=UnknownStrategyError,
                exception=e,
            )

    def decode_time(
        self,
        batch_size: int,
        resident_tokens: int,
        dop: int,
        masters: int = 1,
    ) -> float:
        """Predict one decoding step.

        Parameters
        ----------
        batch_size : int
            Requests in the batch.
        resident_tokens : int
            KV tokens resident for the batch.
        dop : int
            Instances of the group.
        masters : int, optional
            Master instances; they split the per-request cost once the
            batch is compute bound (default 1).

        Returns
        -------
        float
            Step time in ms.

        """
        if batch_size < 1 or dop < 1:
            raise_error(
                f"Decoding needs batch_size >= 1 and dop >= 1, got "
                f"{batch_size} and {dop}"
            )
        coef = self.decode
        split = max(masters, 1) if batch_size > coef.threshold else 1
        return float(
            coef.alpha
            + coef.beta * batch_size / split
            + coef.gamma * resident_tokens / dop
        )

    @classmethod
    def from_samples(
        cls,
        samples: Sequence[ProfileSample],
        decode: DecodeCoefficients,
        tipping: Optional[Union[Dict[Strategy, float], float]] = None,
    ) -> "ScalingInfoBase":
        """Fit a SIB from profile samples.

        Parameters
        ----------
        samples : sequence of ProfileSample
            Samples of one or more strategies.
        decode : DecodeCoefficients
            Decoding coefficients.
        tipping : dict or float, optional
            Tipping points (default None).

        Returns
        -------
        ScalingInfoBase
            The fitted SIB.

        """
        grouped: Dict[Strategy, List[ProfileSample]] = defaultdict(list)
        for sample in samples:
            grouped[sample.strategy].append(sample)
        prefill = {
            strategy: fit_coefficients(group)
            for strategy, group in sorted(grouped.items())
        }
        return cls(prefill, decode, tipping=tipping, samples=list(samples))

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ScalingInfoBase":
        """Load a SIB from a line-delimited JSON file.

        Each line holds one record with a ``record`` field: ``"prefill"``
        (``sp``, ``tp``, optional ``alpha``/``beta``/``gamma`` and
        ``tipping_ms``), ``"decode"`` (``alpha``, ``beta``, ``gamma``,
        ``threshold``) or ``"sample"`` (``sp``, ``tp``, ``lengths``,
        ``time_ms``). Strategies that only have samples are fitted.

        Parameters
        ----------
        path : str or pathlib.Path
            The SIB file.

        Returns
        -------
        ScalingInfoBase
            The loaded SIB.

        """
        path = Path(path)
        if not path.exists():
            raise_error(
                f"SIB file does not exist: {path.absolute()!s}",
                klass=ConfigError,
            )
        logger.info(f"Loading SIB from {path.absolute()!s}")
        df = pd.read_json(path, lines=True, dtype=False, precise_float=True)
        if "record" not in df.columns:
            raise_error(f"SIB file {path} has no `record` field")
        prefill: Dict[Strategy, CostCoefficients] = {}
        tipping: Dict[Strategy, float] = {}
        samples: List[ProfileSample] = []
        decode = None
        for row in df.to_dict(orient="records"):
            kind = row["record"]
            if kind == "decode":
                decode = DecodeCoefficients(
                    alpha=float(row["alpha"]),
                    beta=float(row["beta"]),
                    gamma=float(row["gamma"]),
                    threshold=int(row["threshold"]),
                )
                continue
            strategy = Strategy(int(row["sp"]), int(row["tp"]))
            if kind == "prefill":
                keys = ("alpha", "beta", "gamma")
                if all(_is_set(row.get(k)) for k in keys):
                    prefill[strategy] = CostCoefficients(
                        float(row["alpha"]),
                        float(row["beta"]),
                        float(row["gamma"]),
                    )
                if _is_set(row.get("tipping_ms")):
                    tipping[strategy] = float(row["tipping_ms"])
            elif kind == "sample":
                samples.append(
                    ProfileSample(
                        strategy=strategy,
                        lengths=tuple(int(x) for x in row["lengths"]),
                        measured_time=float(row["time_ms"]),
                    )
                )
            else:
                raise_error(f"Unknown SIB record kind: {kind!r}")
        if decode is None:
            raise_error(f"SIB file {path} has no decode record")
        # Fit strategies known only through samples
        by_strategy: Dict[Strategy, List[ProfileSample]] = defaultdict(list)
        for sample in samples:
            by_strategy[sample.strategy].append(sample)
        for strategy, group in sorted(by_strategy.items()):
            if strategy not in prefill:
                prefill[strategy] = fit_coefficients(group)
        return cls(prefill, decode, tipping=tipping, samples=samples)

    def to_records(self, include_samples: bool = True) -> List[Dict]:
        """Convert the SIB to line records.

        Parameters
        ----------
        include_samples : bool, optional
            Whether to emit the profile samples (default True).

        Returns
        -------
        list of dict
            The records, as written by :meth:`save`.

        """
        records: List[Dict] = [
            {
                "record": "decode",
                "alpha": self.decode.alpha,
                "beta": self.decode.beta,
                "gamma": self.decode.gamma,
                "threshold": self.decode.threshold,
            }
        ]
        for strategy in self.strategies:
            coef = self._prefill[strategy]
            record = {
                "record": "prefill",
                "sp": strategy.sp,
                "tp": strategy.tp,
                "alpha": coef.alpha,
                "beta": coef.beta,
                "gamma": coef.gamma,
            }
            if strategy in self._tipping:
                record["tipping_ms"] = self._tipping[strategy]
            records.append(record)
        if include_samples:
            for sample in self.samples:
                records.append(
                    {
                        "record": "sample",
                        "sp": sample.strategy.sp,
                        "tp": sample.strategy.tp,
                        "lengths": [int(x) for x in sample.lengths],
                        "time_ms": sample.measured_time,
                    }
                )
        return records

    def save(
        self, path: Union[str, Path], include_samples: bool = True
    ) -> None:
        """Write the SIB as line-delimited JSON.

        Parameters
        ----------
        path : str or pathlib.Path
            The output file.
        include_samples : bool, optional
            Whether to write the profile samples (default True).

        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w") as f:
            for record in self.to_records(include_samples=include_samples):
                f.write(json.dumps(record, sort_keys=True) + "\n")
        logger.info(f"SIB written to {path.absolute()!s}")

    def monotone_violations(self) -> List[Tuple[Strategy, Strategy]]:
        """List strategy pairs that break DoP scaling.

        Within a family of equal ``tp`` (and among pure tensor-parallel
        strategies), a larger DoP must not have a larger ``beta`` or
        ``gamma``.

        Returns
        -------
        list of (Strategy, Strategy)
            Offending ``(smaller, larger)`` pairs.

        """
        families: Dict[Tuple[str, int], List[Strategy]] = defaultdict(list)
        for strategy in self._prefill:
            families[("tp", strategy.tp)].append(strategy)
            if strategy.sp == 1:
                families[("sp", 1)].append(strategy)
        violations = []
        for members in families.values():
            members = sorted(members, key=lambda s: s.dop)
            for small, large in zip(members[:-1], members[1:]):
                a = np.array(self._prefill[small].as_tuple()[1:])
                b = np.array(self._prefill[large].as_tuple()[1:])
                if (b > a).any():
                    violations.append((small, large))
        return violations
