"""Provide concrete implementation for report storage via SQLite."""

# Authors: The espsim developers
# License: AGPL

from pathlib import Path
from typing import TYPE_CHECKING, List, Union

import pandas as pd
from sqlalchemy import create_engine, inspect, text

from ..api.decorators import register_storage
from ..utils import logger, raise_error, warn_with_log
from .pandas_base import PandasBaseReportStorage


if TYPE_CHECKING:
    from sqlalchemy.engine import Engine


@register_storage
class SQLiteReportStorage(PandasBaseReportStorage):
    """Concrete implementation for report storage via SQLite.

    All tables go to the one SQLite file given by ``uri``. SQLite does not
    support concurrency, so only the process assembling the results should
    write.

    Parameters
    ----------
    uri : str or pathlib.Path
        The path to the file to be used.
    upsert : {"update", "ignore"}, optional
        What to do with a run already stored (default "update").

    See Also
    --------
    PandasBaseReportStorage : The base class for pandas-based storage.
    CSVReportStorage : The concrete class for CSV-based storage.

    """

    def __init__(
        self, uri: Union[str, Path], upsert: str = "update"
    ) -> None:
        super().__init__(uri=uri, upsert=upsert)
        # Create parent directories if not present
        if not self.uri.parent.exists():
            logger.info(
                f"Output directory ({self.uri.parent.absolute()!s}) "
                "does not exist, creating now."
            )
            self.uri.parent.mkdir(parents=True, exist_ok=True)

    def get_engine(self) -> "Engine":
        """Get engine.

        Returns
        -------
        sqlalchemy.engine.Engine
            The sqlalchemy engine.

        """
        return create_engine(f"sqlite:///{self.uri}", echo=False)

    def list_tables(self) -> List[str]:
        """List the tables in the storage.

        Returns
        -------
        list of str
            The table names usable with :meth:`.read_df`.

        """
        return sorted(inspect(self.get_engine()).get_table_names())

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
        engine = self.get_engine()
        if not inspect(engine).has_table(table):
            raise_error(f"Table {table} not found in {self}")
        return pd.read_sql(
            sql=table,
            con=engine,
            index_col=self.INDEX_COLUMNS.get(table, ["run"]),
        )

    def store_df(self, table: str, df: pd.DataFrame) -> None:
        """Implement pandas DataFrame storing with UPSERT by run.

        Parameters
        ----------
        table : str
            Name of the table.
        df : pandas.DataFrame
            The rows to store, indexed as the table.

        """
        engine = self.get_engine()
        runs = list(df.index.get_level_values("run").unique())
        with engine.begin() as con:
            if inspect(con).has_table(table):
                stored = {
                    row[0]
                    for row in con.execute(
                        text(f'SELECT DISTINCT run FROM "{table}"')
                    )
                }
                present = [x for x in runs if x in stored]
                if present and self._upsert == "ignore":
                    warn_with_log(
                        f"Runs {sorted(present)} are already stored in "
                        f"{self}, ignoring their new rows."
                    )
                    df = df[
                        ~df.index.get_level_values("run").isin(present)
                    ]
                elif present:
                    for run in present:
                        con.execute(
                            text(f'DELETE FROM "{table}" WHERE run = :run'),
                            {"run": run},
                        )
            logger.debug(f"Writing {len(df)} rows to {self.uri}:{table}")
            df.to_sql(name=table, con=con, if_exists="append")
