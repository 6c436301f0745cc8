"""Provide class and functions for logging."""

# Authors: The espsim developers
# License: AGPL

import logging
import sys
from pathlib import Path
from typing import (
    Any,
    Callable,
    Dict,
    MutableMapping,
    NoReturn,
    Optional,
    Sequence,
    Tuple,
    Type,
    Union,
)
from warnings import warn


__all__ = [
    "logger",
    "SimClockAdapter",
    "sim_logger",
    "get_versions",
    "log_versions",
    "configure_logging",
    "raise_error",
    "warn_with_log",
]


logger = logging.getLogger("ESPSIM")

# Libraries whose versions go to the log header of every run
LOGGED_LIBRARIES: Tuple[str, ...] = (
    "numpy",
    "scipy",
    "pandas",
    "sqlalchemy",
    "click",
    "espsim",
)

_DEFAULT_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


class WrapStdOut(logging.StreamHandler):
    """Resolve ``sys.stdout`` at write time.

    Click's ``CliRunner`` swaps ``sys.stdout`` while a command runs; the
    handler must follow the swap.

    """

    def __getattr__(self, name: str) -> Any:
        """Implement attribute fetch."""
        if hasattr(sys.stdout, name):
            return getattr(sys.stdout, name)
        raise AttributeError(f"'file' object has no attribute '{name}'")


class SimClockAdapter(logging.LoggerAdapter):
    """Prefix messages with the simulated time.

    Parameters
    ----------
    base : logging.Logger
        The logger to write to.
    clock : callable
        Returns the current simulated time in milliseconds.

    """

    def __init__(
        self, base: logging.Logger, clock: Callable[[], float]
    ) -> None:
        super().__init__(base, {})
        self._clock = clock

    def process(
        self, msg: Any, kwargs: MutableMapping[str, Any]
    ) -> Tuple[Any, MutableMapping[str, Any]]:
        """Add the simulated time to the message."""
        return f"[t={self._clock():.3f} ms] {msg}", kwargs


def sim_logger(clock: Callable[[], float]) -> SimClockAdapter:
    """Get the package logger stamped with a simulated clock.

    Parameters
    ----------
    clock : callable
        Returns the current simulated time in milliseconds.

    Returns
    -------
    SimClockAdapter
        The adapter around :data:`logger`.

    """
    return SimClockAdapter(logger, clock)


def get_versions(
    names: Optional[Sequence[str]] = None,
) -> Dict[str, Optional[str]]:
    """Get versions of imported libraries.

    Parameters
    ----------
    names : sequence of str, optional
        Libraries to report; every imported top-level module if None
        (default None).

    Returns
    -------
    dict
        Library name to version, None when a module has no version.

    """
    if names is None:
        names = [
            x for x in sys.modules if "." not in x or x == "ruamel.yaml"
        ]
    versions: Dict[str, Optional[str]] = {}
    for name in names:
        module = sys.modules.get(name)
        if module is None:
            continue
        version = getattr(module, "__version__", None)
        versions[name] = None if version is None else str(version)
    return versions


def _close_handlers(logger: logging.Logger) -> None:
    """Close and remove the stream and file handlers of a logger.

    Parameters
    ----------
    logger : logging.Logger
        The logger to close handlers for.

    """
    for handler in list(logger.handlers):
        if isinstance(handler, logging.StreamHandler):
            if isinstance(handler, logging.FileHandler):
                handler.close()
            logger.removeHandler(handler)


def log_versions() -> None:
    """Log versions of the libraries a simulation depends on."""
    logger.info("===== Lib Versions =====")
    for name, version in get_versions(LOGGED_LIBRARIES).items():
        logger.info(f"{name}: {version}")
    logger.info("========================")


def _make_handler(
    fname: Optional[Union[str, Path]], overwrite: Optional[bool]
) -> logging.Handler:
    """Create a file handler, or a stdout handler if ``fname`` is None."""
    if fname is None:
        return logging.StreamHandler(WrapStdOut())  # type: ignore
    fname = Path(fname)
    if fname.exists() and overwrite is None:
        warn(
            f"File ({fname.absolute()!s}) exists. "
            "Messages will be appended. Use overwrite=True to "
            "overwrite or overwrite=False to avoid this message.",
            stacklevel=3,
        )
    return logging.FileHandler(fname, mode="w" if overwrite else "a")


def configure_logging(
    level: Union[int, str] = "WARNING",
    fname: Optional[Union[str, Path]] = None,
    overwrite: Optional[bool] = None,
    output_format: Optional[str] = None,
) -> None:
    """Configure the package logger.

    Parameters
    ----------
    level : int or {"DEBUG", "INFO", "WARNING", "ERROR"}
        The level of the messages to print (default "WARNING").
    fname : str or pathlib.Path, optional
        File to log to. If None, stdout is used (default None).
    overwrite : bool, optional
        Overwrite the log file if it exists. None appends like False, but
        warns that entries will be appended (default None).
    output_format : str, optional
        Format of the messages; ``"%(asctime)s - %(name)s -
        %(levelname)s - %(message)s"`` if None (default None).

    """
    _close_handlers(logger)
    if isinstance(level, str):
        level = logging.getLevelName(level.upper())
    handler = _make_handler(fname, overwrite)
    handler.setFormatter(
        logging.Formatter(fmt=output_format or _DEFAULT_FORMAT)
    )
    logger.setLevel(level)
    logger.addHandler(handler)
    log_versions()


def raise_error(
    msg: str,
    klass: Type[Exception] = ValueError,
    exception: Optional[Exception] = None,
) -> NoReturn:
    """Log an error, then raise it.

    Parameters
    ----------
    msg : str
        The message for the exception.
    klass : subclass of Exception, optional
        The exception class to raise (default ValueError).
    exception : Exception, optional
        The exception this one is raised from (default None).

    """
    logger.error(msg)
    if exception is None:
        raise klass(msg)
    raise klass(msg) from exception


def warn_with_log(
    msg: str, category: Type[Warning] = RuntimeWarning
) -> None:
    """Log a warning, then issue it.

    Parameters
    ----------
    msg : str
        Warning message.
    category : subclass of Warning, optional
        The warning class (default RuntimeWarning).

    """
    logger.warning(msg)
    warn(msg, category=category, stacklevel=2)
