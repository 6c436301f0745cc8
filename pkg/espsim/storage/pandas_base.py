"""Provide abstract base class for report storage via pandas."""

# Authors: The espsim developers
# License: AGPL

from pathlib import Path
from typing import TYPE_CHECKING, Dict, List, Union

import numpy as np
import pandas as pd

from ..utils import raise_error, warn_with_log
from .base import BaseReportStorage


if TYPE_CHECKING:
    from ..metrics import MetricsReport


class PandasBaseReportStorage(BaseReportStorage):
    """Abstract base class for report storage via pandas.

    Every table is indexed by the run name, plus the request id for
    per-request tables and the point position for sweeps.

    Parameters
    ----------
    uri : str or pathlib.Path
        The path to the storage.
    upsert : {"update", "ignore"}, optional
        What to do with a run already stored. If "update", its rows are
        replaced. If "ignore", the new rows are dropped (default "update").

    See Also
    --------
    BaseReportStorage : The base class for report storage.

    """

    INDEX_COLUMNS: Dict[str, List[str]] = {
        "metrics": ["run"],
        "requests": ["run", "request"],
        "sweep": ["run", "point"],
    }

    def __init__(
        self, uri: Union[str, Path], upsert: str = "update"
    ) -> None:
        if upsert not in ["update", "ignore"]:
            raise_error(
                msg=(
                    "Invalid choice for `upsert`. "
                    "Must be either 'update' or 'ignore'."
                )
            )
        super().__init__(uri=uri)
        self._upsert = upsert

    def store_df(self, table: str, df: pd.DataFrame) -> None:
        """Implement pandas DataFrame storing.

        Parameters
        ----------
        table : str
            Name of the table.
        df : pandas.DataFrame
            The rows to store, indexed as the table.

        """
        raise_error(
            msg="Concrete classes need to implement store_df().",
            klass=NotImplementedError,
        )

    def store_metrics(self, name: str, report: "MetricsReport") -> None:
        """Store the aggregates of one run.

        Parameters
        ----------
        name : str
            Name of the run.
        report : MetricsReport
            The report.

        """
        df = report.to_frame()
        df.index = pd.Index([name], name="run")
        self.store_df(table="metrics", df=df)

    def store_requests(self, name: str, frame: pd.DataFrame) -> None:
        """Store the per-request metrics of one run.

        Parameters
        ----------
        name : str
            Name of the run.
        frame : pandas.DataFrame
            Per-request frame indexed by request id.

        """
        df = frame.copy()
        df.index = pd.MultiIndex.from_arrays(
            [[name] * len(frame), frame.index.to_numpy()],
            names=self.INDEX_COLUMNS["requests"],
        )
        self.store_df(table="requests", df=df)

    def store_sweep(self, name: str, frame: pd.DataFrame) -> None:
        """Store one row per rate of a sweep.

        Parameters
        ----------
        name : str
            Name of the sweep.
        frame : pandas.DataFrame
            The sweep rows in rate order.

        """
        df = frame.reset_index(drop=True)
        df.index = pd.MultiIndex.from_arrays(
            [[name] * len(df), np.arange(len(df))],
            names=self.INDEX_COLUMNS["sweep"],
        )
        self.store_df(table="sweep", df=df)

    def _merge(
        self, existing: pd.DataFrame, df: pd.DataFrame
    ) -> pd.DataFrame:
        """Merge incoming rows into a stored table following ``upsert``.

        Parameters
        ----------
        existing : pandas.DataFrame
            The stored table.
        df : pandas.DataFrame
            The incoming rows.

        Returns
        -------
        pandas.DataFrame
            The table to write back.

        """
        runs = df.index.get_level_values("run").unique()
        present = existing.index.get_level_values("run").isin(runs)
        if not present.any():
            return pd.concat([existing, df])
        if self._upsert == "ignore":
            stored = existing.index.get_level_values("run").unique()
            warn_with_log(
                f"Runs {sorted(set(stored) & set(runs))} are already "
                f"stored in {self}, ignoring their new rows."
            )
            new = ~df.index.get_level_values("run").isin(stored)
            return pd.concat([existing, df[new]])
        return pd.concat([existing[~present], df])
