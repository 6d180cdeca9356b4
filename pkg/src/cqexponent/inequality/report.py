from __future__ import annotations

import math
import unittest
from dataclasses import dataclass, field
from typing import Any

from ..channel.model import (
    Channel,
    Prior,
    WitnessDocument,
    channel_to_document,
)
from ..common.settings import get_settings


@dataclass
class InequalityReport:
    """
    One evaluated instance of a trace inequality.

    ``gap`` is ``lhs - rhs`` oriented so that ``gap >= 0`` means the inequality holds.
    ``scale`` defaults to ``1 + |lhs| + |rhs|``.
    """

    inequality_id: str
    lhs: float
    rhs: float
    gap: float = float("nan")
    scale: float = float("nan")
    imag_residue: float = 0.0
    support_restricted: bool = False
    exploratory: bool = False
    witness: dict[str, Any] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.lhs = float(self.lhs)
        self.rhs = float(self.rhs)
        self.gap = self.lhs - self.rhs
        if math.isnan(self.scale):
            self.scale = 1.0 + abs(self.lhs) + abs(self.rhs)

    @property
    def relative_gap(self) -> float:
        return self.gap / self.scale

    def holds(self, tol: float | None = None) -> bool:
        tol = get_settings().assert_tol if tol is None else tol
        return self.gap >= -tol * self.scale


def witness_document(
    inequality_id: str, channel: Channel, prior: Prior, s: float, seed: int, **extra: float
) -> WitnessDocument:
    base = channel_to_document(channel, prior)
    return WitnessDocument(
        dim=base.dim,
        states=base.states,
        prior=base.prior,
        s=float(s),
        seed=int(seed),
        inequality=inequality_id,
        extra={k: float(v) for k, v in extra.items()},
    )


class TestInequalityReport(unittest.TestCase):
    def test_gap_and_scale(self):
        r = InequalityReport("x", lhs=3.0, rhs=1.0)
        self.assertEqual(r.gap, 2.0)
        self.assertEqual(r.scale, 5.0)
        self.assertTrue(r.holds())

    def test_tolerance_is_relative(self):
        r = InequalityReport("x", lhs=1e6, rhs=1e6 + 1e-4)
        self.assertTrue(r.holds(1e-9))
        self.assertFalse(InequalityReport("x", lhs=0.0, rhs=1e-6).holds(1e-9))
