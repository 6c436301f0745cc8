"""Provide functions for parser."""

# Authors: The espsim developers
# License: AGPL

from pathlib import Path
from typing import Dict, Union

from ..data.loaders import list_bundled_sibs
from ..utils.exceptions import ConfigError
from ..utils.logging import logger, raise_error
from .utils import yaml


def _resolve(filepath: Path, value: str) -> str:
    """Make a path relative to the YAML file absolute."""
    path = Path(value)
    if path.is_absolute():
        return str(path)
    return str((filepath.parent / path).resolve())


def parse_yaml(filepath: Union[str, Path]) -> Dict:
    """Parse YAML.

    Paths in the ``sib``, ``trace`` and ``storage`` sections are relative
    to the YAML file, not to the current working directory, so they are
    made absolute here. Bundled SIB names are kept as is.

    Parameters
    ----------
    filepath : str or pathlib.Path
        The filepath to read from.

    Returns
    -------
    dict
        The contents represented as dictionary.

    Raises
    ------
    ConfigError
        If the file does not exist or does not hold a mapping.

    """
    # Convert str to Path
    if not isinstance(filepath, Path):
        filepath = Path(filepath)

    logger.info(f"Parsing yaml file: {filepath.absolute()!s}")
    # Filepath existence check
    if not filepath.exists():
        raise_error(
            f"File does not exist: {filepath.absolute()!s}",
            klass=ConfigError,
        )
    contents = yaml.load(filepath)
    if contents is None:
        contents = {}
    if not isinstance(contents, dict):
        raise_error(
            f"The configuration in {filepath} must be a mapping of sections",
            klass=ConfigError,
        )
    # ruamel gives CommentedMap, plain dicts compare and pickle better
    contents = {
        k: dict(v) if isinstance(v, dict) else v for k, v in contents.items()
    }

    sib = contents.get("sib")
    if isinstance(sib, dict) and sib.get("path") is not None:
        if str(sib["path"]) not in list_bundled_sibs():
            sib["path"] = _resolve(filepath, sib["path"])
    trace = contents.get("trace")
    if isinstance(trace, dict) and trace.get("path") is not None:
        trace["path"] = _resolve(filepath, trace["path"])
    storage = contents.get("storage")
    if isinstance(storage, dict) and storage.get("uri") is not None:
        storage["uri"] = _resolve(filepath, storage["uri"])
    return contents
