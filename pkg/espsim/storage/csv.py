"""Provide concrete implementation for report storage via CSV files."""

# Authors: The espsim developers
# License: AGPL

from pathlib import Path
from typing import List, Union

import pandas as pd

from ..api.decorators import register_storage
from ..utils import logger, raise_error
from .pandas_base import PandasBaseReportStorage


@register_storage
class CSVReportStorage(PandasBaseReportStorage):
    """Concrete implementation for report storage via CSV files.

    Each table is a comma-separated ``<table>.csv`` file in the ``uri``
    directory, mirrored as line-delimited JSON records in
    ``<table>.jsonl``.

    Parameters
    ----------
    uri : str or pathlib.Path
        The directory to write to.
    upsert : {"update", "ignore"}, optional
        What to do with a run already stored (default "update").

    See Also
    --------
    PandasBaseReportStorage : The base class for pandas-based storage.
    SQLiteReportStorage : The concrete class for SQLite-based storage.

    """

    def __init__(
        self, uri: Union[str, Path], upsert: str = "update"
    ) -> None:
        super().__init__(uri=uri, upsert=upsert)
        if not self.uri.exists():
            logger.info(
                f"Output directory ({self.uri.absolute()!s}) "
                "does not exist, creating now."
            )
            self.uri.mkdir(parents=True, exist_ok=True)

    def list_tables(self) -> List[str]:
        """List the tables in the storage.

        Returns
        -------
        list of str
            The table names usable with :meth:`.read_df`.

        """
        return sorted(x.stem for x in self.uri.glob("*.csv"))

    def read_df(self, table: str) -> pd.DataFrame:
        """Read a table into a pandas DataFrame.

        Parameters
        ----------
        table : str
            Name of the table.

        Returns
        -------
        pandas.DataFrame
            The table.

        Raises
        ------
        ValueError
            If the table is not stored.

        """
        path = self.uri / f"{table}.csv"
        if not path.exists():
            raise_error(f"Table {table} not found in {self}")
        df = pd.read_csv(path)
        return df.set_index(self.INDEX_COLUMNS.get(table, ["run"]))

    def store_df(self, table: str, df: pd.DataFrame) -> None:
        """Implement pandas DataFrame storing.

        Parameters
        ----------
        table : str
            Name of the table.
        df : pandas.DataFrame
            The rows to store, indexed as the table.

        """
        if table in self.list_tables():
            df = self._merge(self.read_df(table), df)
        logger.debug(f"Writing {len(df)} rows to {self.uri}/{table}.csv")
        df.to_csv(self.uri / f"{table}.csv")
        df.reset_index().to_json(
            self.uri / f"{table}.jsonl", orient="records", lines=True
        )
