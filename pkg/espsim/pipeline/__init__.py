"""Provide imports for pipeline sub-package."""

# Authors: The espsim developers
# License: AGPL

from . import registry
