from __future__ import annotations

import unittest
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from ..channel.ensembles import StateEnsemble
from ..channel.model import (
    Channel,
    DensityMatrix,
    Prior,
    WitnessDocument,
    binary_symmetric_channel,
    holevo_quantity,
    identical_states_channel,
    orthogonal_pure_channel,
)
from ..common.errors import CQExponentError
from ..common.settings import get_settings
from ..common.utils import log, timed
from ..exponent.auxiliary import (
    concavity_scan,
    default_grid,
    eq_aux,
    eq_derivative,
    eq_second_derivative,
    gallager_e0_scalar,
)
from .fuzz import FuzzConfig, FuzzSummary, fuzz
from .report import InequalityReport
from .theorem import SUPPORT_RESTRICTED, evaluate_instance, replay_witness

CLASSICAL_S = (-0.5, 0.0, 0.25, 0.5, 0.75, 1.0)
CHANNEL_INEQUALITIES = ("eq3", "theorem", "jensen", "intermediate", "final-step")
FUZZ_ENSEMBLES = (StateEnsemble.HAAR_MIXED, StateEnsemble.DIAGONAL, StateEnsemble.NEAR_IDENTICAL)


@dataclass
class CheckRow:
    """
    One line of a verification table.

    ``worst`` is the value closest to failing: an error magnitude compared with
    ``threshold`` from above, or a relative gap compared with ``-threshold`` from below.
    """

    check: str
    instances: int
    worst: float
    threshold: float
    violations: int = 0
    asserted: bool = True
    note: str = ""
    witness: dict[str, Any] | None = None

    @property
    def status(self) -> str:
        if self.instances == 0:
            return "skipped"
        if not self.asserted:
            return "report"
        return "violated" if self.violations else "ok"


@dataclass
class VerificationSummary:
    rows: list[CheckRow] = field(default_factory=list)

    @property
    def violated(self) -> bool:
        return any(r.status == "violated" for r in self.rows)


def _error_row(check: str, error: float, threshold: float, instances: int = 1) -> CheckRow:
    return CheckRow(check, instances, error, threshold, violations=int(error > threshold))


def _property_rows(channel: Channel, prior: Prior) -> list[CheckRow]:
    rows = []
    rows.append(_error_row("eq-at-zero", abs(eq_aux(channel, prior, 0.0)), 1e-12))
    rows.append(_error_row(
        "slope-at-zero-vs-holevo",
        abs(eq_derivative(channel, prior, 0.0) - holevo_quantity(channel, prior)),
        1e-5,
    ))
    curvature = eq_second_derivative(channel, prior, 0.0)
    rows.append(CheckRow("curvature-at-zero", 1, curvature, 1e-6, violations=int(curvature > 1e-6),
                         note="E_q''(0); <= 0 expected"))
    scan = concavity_scan(channel, prior)
    positive = [v for s, v in zip(scan.s_grid, scan.values) if s > 0]
    sign = CheckRow("sign-on-(0,1]", len(positive), min(positive), 1e-10)
    sign.violations = sum(1 for v in positive if v < -1e-10)
    rows.append(sign)
    rows.append(_error_row("monotone-on-[0,1]", scan.monotone_violation, 1e-8, len(scan.s_grid)))
    rows.append(_error_row(
        "concave-on-[0,1]", scan.max_second_difference / scan.scale, 1e-8, len(scan.s_grid)
    ))

    # open region: reported, never asserted
    open_scan = concavity_scan(channel, prior, default_grid(10, -0.9, 0.0))
    negative = open_scan.values[:-1]
    rows.append(CheckRow("sign-on-(-1,0)", len(negative), max(negative), 0.0, asserted=False,
                         note="max E_q; <= 0 expected"))
    rows.append(CheckRow("monotone-on-(-1,0]", len(open_scan.s_grid), open_scan.monotone_violation,
                         1e-8, asserted=False))
    rows.append(CheckRow("concave-on-(-1,0]", len(open_scan.s_grid),
                         open_scan.max_second_difference / open_scan.scale, 1e-8, asserted=False))

    if channel.is_diagonal():
        transition = channel.transition_matrix()
        error = max(abs(eq_aux(channel, prior, s) - gallager_e0_scalar(transition, prior, s)) for s in CLASSICAL_S)
        rows.append(_error_row("classical-reduction", error, 1e-12, len(CLASSICAL_S)))
    return rows


def _inequality_row(
    check: str,
    evaluate: Callable[[float], InequalityReport],
    s_grid: np.ndarray,
    tol: float,
) -> CheckRow:
    row = CheckRow(check, 0, float("inf"), tol)
    try:
        for s in s_grid:
            report = evaluate(float(s))
            row.instances += 1
            if not report.holds(tol):
                row.violations += 1
            if report.relative_gap < row.worst:
                row.worst = report.relative_gap
                row.witness = report.witness
    except CQExponentError as e:
        log(f"{check}: {e}")
        row.note = f"stopped after {row.instances} points: {e}" if row.instances else str(e)
    if row.instances == 0:
        row.worst = float("nan")
    return row


def _fuzz_row(check: str, summary: FuzzSummary) -> CheckRow:
    row = CheckRow(
        check,
        summary.instances,
        summary.min_gap,
        summary.tolerance,
        violations=summary.violations,
        asserted=summary.asserted > 0,
        witness=summary.worst.witness if summary.worst is not None else None,
    )
    notes = []
    if summary.errors:
        notes.append(f"{summary.errors} evaluation errors")
    if summary.explored:
        notes.append(f"{summary.explored_violations} of {summary.explored} explored instances below -tol")
    row.note = "; ".join(notes)
    if summary.oracle_max_deviation is not None:
        deviation = f"scalar oracle deviation {summary.oracle_max_deviation:.3g}"
        row.note = f"{row.note}; {deviation}" if row.note else deviation
        if summary.oracle_max_deviation > 1e-10:
            row.violations += 1
    return row


def run_verification(
    channel: Channel,
    prior: Prior,
    instances: int = 1000,
    seed: int = 0,
    s_points: int = 11,
) -> VerificationSummary:
    """
    Property suite for one channel plus randomised campaigns over every inequality.

    Channel rows use ``prior``; campaign rows draw their own instances from ``seed``.
    """
    channel.check_prior(prior)
    tol = get_settings().assert_tol
    summary = VerificationSummary()
    s_grid = np.linspace(0.0, 1.0, s_points)
    with timed("exponent properties"):
        summary.rows.extend(_property_rows(channel, prior))
    with timed("channel inequalities"):
        for inequality in CHANNEL_INEQUALITIES:
            support_only = inequality in SUPPORT_RESTRICTED
            summary.rows.append(_inequality_row(
                inequality,
                lambda s, i=inequality, so=support_only: evaluate_instance(
                    i, channel, prior, s, seed=seed, support_only=so
                ),
                s_grid,
                tol,
            ))
    if instances > 0:
        cfg = FuzzConfig(instance_count=instances, seed=seed, s_points=s_points, state_ensemble=FUZZ_ENSEMBLES)
        for inequality in CHANNEL_INEQUALITIES:
            summary.rows.append(_fuzz_row(f"fuzz:{inequality}", fuzz(inequality, cfg)))
        open_cfg = FuzzConfig(
            instance_count=max(instances // 10, 1), seed=seed, s_range=(-0.9, 0.0),
            state_ensemble=FUZZ_ENSEMBLES, shrink=False,
        )
        summary.rows.append(_fuzz_row("fuzz:theorem-open-region", fuzz("theorem", open_cfg)))
    return summary


def verify_witness(doc: WitnessDocument) -> VerificationSummary:
    """
    Replay a stored witness and compare it with the recorded gap when one is present.
    """
    report = replay_witness(doc)
    tol = get_settings().assert_tol
    row = CheckRow(
        f"witness:{doc.inequality}",
        1,
        report.relative_gap,
        tol,
        violations=0 if report.holds(tol) else 1,
        asserted=not report.exploratory,
        witness=report.witness,
    )
    recorded = doc.extra.get("gap")
    if recorded is not None:
        row.note = f"replayed gap {report.gap!r}, recorded {recorded!r}"
        if report.gap != recorded:
            row.violations += 1
    return VerificationSummary([row])


class TestRunVerification(unittest.TestCase):
    def test_orthogonal_channel(self):
        summary = run_verification(orthogonal_pure_channel(2), Prior.uniform(2), instances=20, seed=7)
        self.assertFalse(summary.violated)
        rows = {r.check: r for r in summary.rows}
        self.assertEqual(rows["eq-at-zero"].status, "ok")
        self.assertEqual(rows["theorem"].status, "ok")
        # pure states have no logarithm, so the proof-chain rows cannot run on this channel
        self.assertEqual(rows["jensen"].status, "skipped")
        self.assertEqual(rows["fuzz:theorem"].status, "ok")
        self.assertEqual(rows["fuzz:theorem-open-region"].status, "report")

    def test_diagonal_channel_gets_classical_row(self):
        summary = run_verification(binary_symmetric_channel(0.1), Prior.uniform(2), instances=0)
        rows = {r.check: r for r in summary.rows}
        self.assertIn("classical-reduction", rows)
        self.assertEqual(rows["classical-reduction"].status, "ok")
        self.assertEqual(rows["curvature-at-zero"].status, "ok")
        self.assertLess(rows["curvature-at-zero"].worst, -0.1)
        self.assertEqual(rows["jensen"].status, "ok")
        self.assertFalse(summary.violated)

    def test_identical_states(self):
        state = DensityMatrix(np.array([[0.7, 0.1j], [-0.1j, 0.3]]))
        summary = run_verification(identical_states_channel(state, 3), Prior.uniform(3), instances=0)
        self.assertFalse(summary.violated)

    def test_deterministic(self):
        channel = binary_symmetric_channel(0.2)
        a = run_verification(channel, Prior((0.3, 0.7)), instances=15, seed=3)
        b = run_verification(channel, Prior((0.3, 0.7)), instances=15, seed=3)
        self.assertEqual(
            [(r.check, r.worst, r.violations, r.witness) for r in a.rows],
            [(r.check, r.worst, r.violations, r.witness) for r in b.rows],
        )


class TestVerifyWitness(unittest.TestCase):
    def test_replay(self):
        from ..channel.model import converter

        channel = binary_symmetric_channel(0.25)
        report = evaluate_instance("theorem", channel, Prior((0.4, 0.6)), 0.5, seed=1)
        doc = converter.structure(report.witness, WitnessDocument)
        self.assertEqual(doc.extra["gap"], report.gap)
        summary = verify_witness(doc)
        self.assertEqual(summary.rows[0].status, "ok")
        self.assertEqual(summary.rows[0].worst, report.relative_gap)


class TestFuzzRow(unittest.TestCase):
    def test_errors_are_reported_not_violations(self):
        summary = FuzzSummary("theorem", 10, evaluated=7, errors=3, min_gap=0.1)
        row = _fuzz_row("fuzz:theorem", summary)
        self.assertEqual(row.violations, 0)
        self.assertEqual(row.status, "ok")
        self.assertIn("3 evaluation errors", row.note)

    def test_fully_explored_campaign_is_reported(self):
        summary = FuzzSummary("theorem", 5, evaluated=5, explored=5, explored_violations=2, min_gap=-0.5)
        row = _fuzz_row("fuzz:theorem-open-region", summary)
        self.assertEqual(row.status, "report")
        self.assertIn("2 of 5 explored", row.note)
