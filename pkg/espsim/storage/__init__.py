"""Provide imports for storage sub-package."""

# Authors: The espsim developers
# License: AGPL

from .base import BaseReportStorage
from .pandas_base import PandasBaseReportStorage
from .csv import CSVReportStorage
from .sqlite import SQLiteReportStorage
