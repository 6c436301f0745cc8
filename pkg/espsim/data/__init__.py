"""Provide imports for data sub-package."""

# Authors: The espsim developers
# License: AGPL

from .loaders import (
    get_example_config_path,
    get_example_trace_path,
    get_sib_path,
    load_sib,
)
