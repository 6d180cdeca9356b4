from __future__ import annotations

from typing import Any, Callable, Generic, TypeVar

T = TypeVar("T")


class lazyproperty(Generic[T]):
    """
    Computed once per instance and cached in the instance ``__dict__``.

    Used for eigendecompositions of immutable matrices; concurrent first
    accesses may compute twice but always store the same value.
    """

    def __init__(self, func: Callable[..., T]) -> None:
        self.func = func
        self.attr_name = func.__name__
        self.__doc__ = func.__doc__

    def __set_name__(self, owner: type, name: str) -> None:
        self.attr_name = name

    def __get__(self, instance: Any, owner: type | None = None) -> T:
        if instance is None:
            return self  # type: ignore
        cache = instance.__dict__
        key = f"_cached_{self.attr_name}"
        if key not in cache:
            cache[key] = self.func(instance)
        return cache[key]
