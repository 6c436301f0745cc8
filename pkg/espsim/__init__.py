"""Provide imports for espsim package."""

# Authors: The espsim developers
# License: AGPL

from . import (
    api,
    cluster,
    costmodel,
    data,
    mechanisms,
    metrics,
    pipeline,
    policies,
    simulation,
    storage,
    utils,
)
from ._version import __version__
