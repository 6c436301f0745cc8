"""Provide abstract base class for report storage."""

# Authors: The espsim developers
# License: AGPL

from abc import ABC, abstractmethod
from pathlib import Path
from typing import TYPE_CHECKING, List, Union

import pandas as pd

from ..utils import raise_error


if TYPE_CHECKING:
    from ..metrics import MetricsReport


class BaseReportStorage(ABC):
    """Abstract base class for report storage.

    For every interface that is required, one needs to provide a concrete
    implementation of this abstract class.

    Parameters
    ----------
    uri : str or pathlib.Path
        The path to the storage.

    """

    _VALID_KINDS: List[str] = ["metrics", "requests", "sweep"]

    def __init__(self, uri: Union[str, Path]) -> None:
        self.uri = Path(uri)

    @abstractmethod
    def list_tables(self) -> List[str]:
        """List the tables in the storage.

        Returns
        -------
        list of str
            The table names usable with :meth:`.read_df`.

        """
        raise_error(
            msg="Concrete classes need to implement list_tables().",
            klass=NotImplementedError,
        )

    @abstractmethod
    def read_df(self, table: str) -> pd.DataFrame:
        """Read a table into a pandas DataFrame.

        Parameters
        ----------
        table : str
            Name of the table.

        Returns
        -------
        pandas.DataFrame
            The table, indexed by run name.

        """
        raise_error(
            msg="Concrete classes need to implement read_df().",
            klass=NotImplementedError,
        )

    @abstractmethod
    def store_metrics(self, name: str, report: "MetricsReport") -> None:
        """Store the aggregates of one run.

        Parameters
        ----------
        name : str
            Name of the run.
        report : MetricsReport
            The report.

        """
        raise_error(
            msg="Concrete classes need to implement store_metrics().",
            klass=NotImplementedError,
        )

    @abstractmethod
    def store_requests(self, name: str, frame: pd.DataFrame) -> None:
        """Store the per-request metrics of one run.

        Parameters
        ----------
        name : str
            Name of the run.
        frame : pandas.DataFrame
            Per-request frame indexed by request id.

        """
        raise_error(
            msg="Concrete classes need to implement store_requests().",
            klass=NotImplementedError,
        )

    @abstractmethod
    def store_sweep(self, name: str, frame: pd.DataFrame) -> None:
        """Store one row per rate of a sweep.

        Parameters
        ----------
        name : str
            Name of the sweep.
        frame : pandas.DataFrame
            The sweep rows in rate order.

        """
        raise_error(
            msg="Concrete classes need to implement store_sweep().",
            klass=NotImplementedError,
        )

    def store(self, kind: str, name: str, **kwargs) -> None:
        """Store results of a run.

        Parameters
        ----------
        kind : {"metrics", "requests", "sweep"}
            The storage kind.
        name : str
            Name of the run.
        **kwargs
            The keyword arguments of the matching ``store_*`` method.

        Raises
        ------
        ValueError
            If ``kind`` is invalid.

        """
        if kind not in self._VALID_KINDS:
            raise_error(
                msg=f"I don't know how to store {kind}.",
                klass=ValueError,
            )
        getattr(self, f"store_{kind}")(name=name, **kwargs)

    def __str__(self) -> str:
        """Represent object as string.

        Returns
        -------
        str
            The string representation.

        """
        return f"<{self.__class__.__name__} @ {self.uri}>"
