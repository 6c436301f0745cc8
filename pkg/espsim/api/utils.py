"""Provide utility functions for the api sub-package."""

# Authors: The espsim developers
# License: AGPL

import os
import platform as pl
import re
import sys
from typing import Dict, List


if sys.version_info < (3, 10):  # pragma: no cover
    from importlib_metadata import PackageNotFoundError, distribution
else:
    from importlib.metadata import PackageNotFoundError, distribution

from ruamel.yaml import YAML

from .._version import __version__
from ..utils.logging import get_versions


# Shared YAML reader and writer
yaml = YAML()
yaml.default_flow_style = False
yaml.allow_unicode = True
yaml.indent(mapping=2, sequence=4, offset=2)

# Used when espsim is not installed as a distribution
_RUNTIME_LIBRARIES = [
    "click",
    "numpy",
    "pandas",
    "scipy",
    "sqlalchemy",
    "ruamel.yaml",
    "tqdm",
]

_REQUIREMENT = re.compile(r"^[A-Za-z0-9._-]+")

# Environment variables that change how a simulation behaves or prints
_ENVIRONMENT_KEYS = [
    "OMP_NUM_THREADS",
    "MKL_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "PYTHONHASHSEED",
    "LC_CTYPE",
    "PATH",
]


def _get_espsim_version() -> Dict[str, str]:
    """Get the espsim version."""
    return {"version": __version__}


def _get_python_information() -> Dict[str, str]:
    """Get the Python version and implementation."""
    return {
        "version": pl.python_version(),
        "implementation": pl.python_implementation(),
    }


def _declared_requirements() -> List[str]:
    """Get the names of the runtime requirements of espsim."""
    try:
        requires = distribution("espsim").requires or []
    except PackageNotFoundError:
        return list(_RUNTIME_LIBRARIES)
    names = []
    for requirement in requires:
        if "extra ==" in requirement:
            continue
        match = _REQUIREMENT.match(requirement)
        if match is not None:
            names.append(match.group(0).lower().replace("-", "_"))
    return names


def _get_dependency_information(long_: bool) -> Dict[str, str]:
    """Get versions of the imported dependencies.

    Parameters
    ----------
    long_ : bool
        Report every imported module with a version instead of the
        declared requirements only.

    Returns
    -------
    dict
        Library name to version.

    """
    versions = get_versions()
    if long_:
        names = [k for k in versions if k != "espsim"]
    else:
        names = _declared_requirements()
    return {
        name: versions[name]
        for name in names
        if versions.get(name) is not None
    }


def _get_system_information() -> Dict[str, str]:
    """Get the platform and CPU count."""
    return {
        "platform": pl.platform(),
        "cpus": str(os.cpu_count()),
    }


def _get_environment_information(long_: bool) -> Dict[str, str]:
    """Get environment variables.

    Parameters
    ----------
    long_ : bool
        Report the whole environment instead of the variables relevant to
        simulation runs.

    Returns
    -------
    dict
        Variable name to value.

    """
    if long_:
        return dict(os.environ)
    return {k: os.environ[k] for k in _ENVIRONMENT_KEYS if k in os.environ}
