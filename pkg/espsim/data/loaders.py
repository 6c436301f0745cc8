"""Provide functions to locate and load bundled data."""

# Authors: The espsim developers
# License: AGPL

from pathlib import Path
from typing import TYPE_CHECKING, List, Union

from ..utils import logger, raise_error


if TYPE_CHECKING:
    from ..costmodel import ScalingInfoBase


__all__ = [
    "list_bundled_sibs",
    "get_sib_path",
    "load_sib",
    "get_example_config_path",
    "get_example_trace_path",
]

_DATA_DIR = Path(__file__).parent


def list_bundled_sibs() -> List[str]:
    """List the names of the bundled SIB files.

    Returns
    -------
    list of str
        SIB names usable with :func:`get_sib_path`.

    """
    return sorted(p.stem for p in (_DATA_DIR / "sib").glob("*.jsonl"))


def get_sib_path(name: Union[str, Path] = "default") -> Path:
    """Get the path of a SIB file.

    Parameters
    ----------
    name : str or pathlib.Path, optional
        A bundled SIB name or a path to a SIB file (default "default").

    Returns
    -------
    pathlib.Path
        The SIB file.

    Raises
    ------
    ValueError
        If ``name`` is neither a bundled SIB nor an existing file.

    """
    if str(name) in list_bundled_sibs():
        return _DATA_DIR / "sib" / f"{name}.jsonl"
    path = Path(name)
    if not path.is_file():
        raise_error(
            f"Unknown SIB {name!s}: not a file and not one of the bundled "
            f"SIBs {list_bundled_sibs()}"
        )
    return path


def load_sib(name: Union[str, Path] = "default") -> "ScalingInfoBase":
    """Load a bundled or user-provided SIB.

    Parameters
    ----------
    name : str or pathlib.Path, optional
        A bundled SIB name or a path to a SIB file (default "default").

    Returns
    -------
    ScalingInfoBase
        The loaded SIB.

    """
    from ..costmodel import ScalingInfoBase

    path = get_sib_path(name)
    logger.debug(f"Resolved SIB {name!s} to {path}")
    return ScalingInfoBase.load(path)


def get_example_config_path() -> Path:
    """Get the path of the bundled example configuration."""
    return _DATA_DIR / "configs" / "example.yaml"


def get_example_trace_path() -> Path:
    """Get the path of the bundled example trace."""
    return _DATA_DIR / "traces" / "example.jsonl"
