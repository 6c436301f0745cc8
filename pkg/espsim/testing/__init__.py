"""Provide imports for testing sub-package."""

# Authors: The espsim developers
# License: AGPL

from .factories import (
    make_cluster,
    make_pool,
    make_report,
    make_request,
    make_sib,
    make_state,
    uniform_sib,
)
