"""Provide functions for registry."""

# Authors: The espsim developers
# License: AGPL

from typing import TYPE_CHECKING, Any, Dict, List, Optional, Union

from ..utils.logging import logger, raise_error


if TYPE_CHECKING:
    from ..policies import BasePolicy
    from ..storage import BaseReportStorage


__all__ = ["register", "get_step_names", "get_class", "build"]


# Policies are registered under their spec names ("esp", "chunked", ...),
# storages under their class names
_REGISTRY: Dict[str, Dict[str, type]] = {"policy": {}, "storage": {}}


def _step(step: str) -> Dict[str, type]:
    """Get the classes registered for a step.

    Parameters
    ----------
    step : str
        Name of the step.

    Returns
    -------
    dict
        Registered name to class.

    Raises
    ------
    ValueError
        If ``step`` is not ``"policy"`` or ``"storage"``.

    """
    if step not in _REGISTRY:
        raise_error(
            f"Invalid step: {step}. Valid steps are {sorted(_REGISTRY)}"
        )
    return _REGISTRY[step]


def register(step: str, name: str, klass: type) -> None:
    """Register a class under a name.

    A name registered twice points to the last class.

    Parameters
    ----------
    step : {"policy", "storage"}
        Name of the step.
    name : str
        Name to register the class under.
    klass : class
        Class to be registered.

    """
    classes = _step(step)
    if name in classes and classes[name] is not klass:
        logger.debug(
            f"Replacing {classes[name].__name__} registered as {step} "
            f"{name}"
        )
    logger.debug(f"Registering {klass.__name__} as {step} {name}")
    classes[name] = klass


def get_step_names(step: str) -> List[str]:
    """Get the registered names of a step.

    Parameters
    ----------
    step : {"policy", "storage"}
        Name of the step.

    Returns
    -------
    list of str
        Registered names, sorted.

    """
    return sorted(_step(step))


def get_class(step: str, name: str) -> type:
    """Get the class registered under a name.

    Parameters
    ----------
    step : {"policy", "storage"}
        Name of the step.
    name : str
        Registered name.

    Returns
    -------
    class
        Registered class.

    """
    classes = _step(step)
    if name not in classes:
        raise_error(
            f"Invalid name: {name}. Registered {step} names are "
            f"{sorted(classes)}"
        )
    return classes[name]


def build(
    step: str,
    name: str,
    baseclass: type,
    init_params: Optional[Dict[str, Any]] = None,
) -> Union["BasePolicy", "BaseReportStorage"]:
    """Instantiate a registered class.

    Parameters
    ----------
    step : {"policy", "storage"}
        Name of the step.
    name : str
        Registered name.
    baseclass : class
        Class the object must be an instance of.
    init_params : dict, optional
        Constructor parameters (default None).

    Returns
    -------
    object
        The new object.

    Raises
    ------
    RuntimeError
        If the constructor rejects ``init_params``.
    ValueError
        If the object is not an instance of ``baseclass``.

    """
    klass = get_class(step=step, name=name)
    params = dict(init_params or {})
    logger.debug(f"Building {step} {name} ({klass.__name__}) with {params}")
    try:
        object_ = klass(**params)
    except (ValueError, TypeError) as e:
        raise_error(
            f"Failed to create {step} ({name}). Error: {e}",
            klass=RuntimeError,
            exception=e,
        )
    if not isinstance(object_, baseclass):
        raise_error(
            f"Invalid {step} ({klass.__name__}). "
            f"Must inherit from {baseclass.__name__}"
        )
    return object_
