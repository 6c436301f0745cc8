"""Provide decorators for api."""

# Authors: The espsim developers
# License: AGPL

from typing import Type, TypeVar

from ..pipeline.registry import register
from ..utils import raise_error


__all__ = ["register_policy", "register_storage"]


T = TypeVar("T", bound=Type)


def register_policy(klass: T) -> T:
    """Register a scheduling policy under its spec name.

    The name comes from the class attribute ``name``, which is also the
    kind used in policy specs such as ``chunked:2048``.

    Parameters
    ----------
    klass : class
        The policy class.

    Returns
    -------
    class
        The unmodified input class.

    Raises
    ------
    ValueError
        If the class does not define ``name``.

    """
    name = getattr(klass, "name", None)
    if not isinstance(name, str) or not name:
        raise_error(
            f"Policy {klass.__name__} needs a class attribute 'name'"
        )
    register(step="policy", name=name, klass=klass)
    return klass


def register_storage(klass: T) -> T:
    """Register a report storage under its class name.

    Parameters
    ----------
    klass : class
        The storage class.

    Returns
    -------
    class
        The unmodified input class.

    """
    register(step="storage", name=klass.__name__, klass=klass)
    return klass
