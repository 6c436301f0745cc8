"""Provide imports for api sub-package."""

# Authors: The espsim developers
# License: AGPL

from . import decorators
from .cli import cli
from .functions import fit_sib, get_trace, run, sweep
from .parser import parse_yaml
