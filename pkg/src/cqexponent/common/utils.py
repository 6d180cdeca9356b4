from __future__ import annotations

import sys
import time
import unittest
from contextlib import contextmanager
from typing import Iterator, overload

from .settings import get_settings


@overload
def clamp(x: int, lb: int, ub: int) -> int: ...


@overload
def clamp(x: float, lb: float, ub: float) -> float: ...


def clamp(x: int | float, lb: int | float, ub: int | float) -> int | float:
    return max(lb, min(x, ub))


def log(message: str) -> None:
    """
    Progress output on stderr, only in verbose mode.
    """
    if get_settings().verbose:
        print(message, file=sys.stderr)


@contextmanager
def timed(label: str) -> Iterator[None]:
    start = time.perf_counter()
    try:
        yield
    finally:
        log(f"{label}: {time.perf_counter() - start:.3f}s")


class TestClamp(unittest.TestCase):
    def test_clamp(self):
        self.assertEqual(clamp(5, 0, 3), 3)
        self.assertEqual(clamp(-1.5, 0.0, 1.0), 0.0)
        self.assertEqual(clamp(0.25, 0.0, 1.0), 0.25)
