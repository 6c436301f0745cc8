"""Provide pytest fixtures shared across the test suite."""

# Authors: The espsim developers
# License: AGPL

from typing import Iterator

import pytest

from espsim.utils.logging import logger


@pytest.fixture(autouse=True)
def _restore_package_logger() -> Iterator[None]:
    """Restore the package logger's level and handlers after each test.

    ``configure_logging`` mutates the global ``ESPSIM`` logger; without
    this, a level set by one test leaks into later ``caplog`` tests.

    """
    level = logger.level
    handlers = list(logger.handlers)
    yield
    logger.setLevel(level)
    logger.handlers[:] = handlers
