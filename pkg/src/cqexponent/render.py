"""
Text, CSV and JSON documents for every result type.

Computation is in nats throughout; ``unit="bits"`` only changes what is printed.
Text and CSV numbers carry 12 significant digits, JSON numbers are exact.
"""

from __future__ import annotations

import json
import math
import unittest
from dataclasses import dataclass
from functools import singledispatch
from typing import Any, Literal, Sequence

from .channel.model import Prior
from .coding.sim import TrialSummary
from .common.errors import ConfigError
from .inequality.fuzz import FuzzSummary
from .inequality.verify import CheckRow, VerificationSummary
from .rate.optimizer import RateExponentPoint

Unit = Literal["nats", "bits"]
Format = Literal["text", "csv", "json"]

UNITS = ("nats", "bits")


def check_unit(unit: str) -> Unit:
    if unit not in UNITS:
        raise ConfigError(f"unit must be one of {UNITS}, got {unit!r}")
    return unit  # type: ignore[return-value]


def in_unit(x: float, unit: Unit) -> float:
    return x / math.log(2) if unit == "bits" else x


def fmt(x: float) -> str:
    return f"{x:.12g}"


def _json_number(x: float) -> float | None:
    return x if math.isfinite(x) else None


def _dumps(obj: Any) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def _csv(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    return "".join(",".join(r) + "\n" for r in [header, *rows])


@dataclass
class EqTable:
    s_values: list[float]
    values: list[float]


@dataclass
class RateCurve:
    points: list[RateExponentPoint]


@dataclass
class TrialTable:
    summaries: list[TrialSummary]


@dataclass
class CapacityReport:
    value: float
    prior: Prior | None = None


@singledispatch
def render_report(report: Any, style: Format = "text", unit: Unit = "nats") -> str:
    raise TypeError(f"cannot render {type(report).__name__}")


@render_report.register
def _(report: EqTable, style: Format = "text", unit: Unit = "nats") -> str:
    values = [in_unit(v, unit) for v in report.values]
    if style == "json":
        return _dumps([{"s": s, "E_q": v} for s, v in zip(report.s_values, values)])
    if style == "text" and len(values) == 1:
        return fmt(values[0]) + "\n"
    return _csv(["s", "E_q"], [[fmt(s), fmt(v)] for s, v in zip(report.s_values, values)])


@render_report.register
def _(report: RateCurve, style: Format = "text", unit: Unit = "nats") -> str:
    points = report.points
    size = max((p.prior_star.size for p in points), default=0)
    if style == "json":
        return _dumps([
            {
                "R": in_unit(p.R, unit),
                "s_star": p.s_star,
                "value": in_unit(p.value, unit),
                "prior": list(p.prior_star.weights),
            }
            for p in points
        ])
    header = ["R", "s_star", "value", *(f"prior_{i}" for i in range(size))]
    rows = [
        [fmt(in_unit(p.R, unit)), fmt(p.s_star), fmt(in_unit(p.value, unit)), *map(fmt, p.prior_star.weights)]
        for p in points
    ]
    return _csv(header, rows)


@render_report.register
def _(report: TrialTable, style: Format = "text", unit: Unit = "nats") -> str:
    rate_column = "R_nats" if unit == "nats" else "R_bits"
    if style == "json":
        return _dumps([
            {
                "n": t.n,
                "M": t.M,
                rate_column: in_unit(t.rate, unit),
                "trials": t.trials,
                "mean_avg_err": t.mean_avg_err,
                "mean_max_err": t.mean_max_err,
                "exponent_proxy": _json_number(in_unit(t.exponent_proxy, unit)),
            }
            for t in report.summaries
        ])
    header = ["n", "M", rate_column, "trials", "mean_avg_err", "mean_max_err", "exponent_proxy"]
    rows = [
        [str(t.n), str(t.M), fmt(in_unit(t.rate, unit)), str(t.trials),
         fmt(t.mean_avg_err), fmt(t.mean_max_err), fmt(in_unit(t.exponent_proxy, unit))]
        for t in report.summaries
    ]
    return _csv(header, rows)


@render_report.register
def _(report: CapacityReport, style: Format = "text", unit: Unit = "nats") -> str:
    value = in_unit(report.value, unit)
    if style == "json":
        doc: dict[str, Any] = {"capacity": value, "unit": unit}
        if report.prior is not None:
            doc["prior"] = list(report.prior.weights)
        return _dumps(doc)
    return fmt(value) + "\n"


def _row_document(row: CheckRow) -> dict[str, Any]:
    return {
        "check": row.check,
        "instances": row.instances,
        "worst": _json_number(row.worst),
        "threshold": row.threshold,
        "violations": row.violations,
        "status": row.status,
        "note": row.note,
        "witness": row.witness,
    }


def _table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(r[i]) for r in [header, *rows]) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in [header, *rows]]
    return "\n".join(lines) + "\n"


@render_report.register
def _(report: VerificationSummary, style: Format = "text", unit: Unit = "nats") -> str:
    if style == "json":
        return _dumps({"violated": report.violated, "rows": [_row_document(r) for r in report.rows]})
    header = ["check", "instances", "worst", "threshold", "violations", "status", "note"]
    rows = [
        [r.check, str(r.instances), fmt(r.worst), fmt(r.threshold), str(r.violations), r.status, r.note]
        for r in report.rows
    ]
    if style == "csv":
        return _csv(header, rows)
    return _table(header, rows)


@render_report.register
def _(report: FuzzSummary, style: Format = "text", unit: Unit = "nats") -> str:
    witness = report.worst.witness if report.worst is not None else None
    shrunk = report.shrunk.witness if report.shrunk is not None else None
    doc = {
        "inequality": report.inequality_id,
        "instances": report.instances,
        "evaluated": report.evaluated,
        "violations": report.violations,
        "errors": report.errors,
        "min_relative_gap": _json_number(report.min_gap),
        "tolerance": report.tolerance,
        "status": report.status,
        "worst_witness": witness,
        "shrunk_witness": shrunk,
    }
    if report.oracle_max_deviation is not None:
        doc["scalar_oracle_deviation"] = report.oracle_max_deviation
    if style == "json":
        return _dumps(doc)
    lines = []
    for key, value in doc.items():
        if key.endswith("witness"):
            continue
        lines.append(f"{key}: {fmt(value) if isinstance(value, float) else value}")
    if witness is not None:
        lines.append("worst witness:")
        lines.append(json.dumps(witness))
    if shrunk is not None:
        lines.append("shrunk witness:")
        lines.append(json.dumps(shrunk))
    return "\n".join(lines) + "\n"


class TestRender(unittest.TestCase):
    def test_number_format(self):
        self.assertEqual(fmt(0.5 * math.log(2)), "0.34657359028")
        self.assertEqual(fmt(math.inf), "inf")
        self.assertEqual(in_unit(math.log(2), "bits"), 1.0)

    def test_single_eq_value(self):
        text = render_report(EqTable([0.5], [0.5 * math.log(2)]))
        self.assertEqual(text, "0.34657359028\n")
        self.assertEqual(render_report(EqTable([0.5], [0.5 * math.log(2)]), unit="bits"), "0.5\n")

    def test_curve_row(self):
        point = RateExponentPoint(0.3, 1.0, Prior.uniform(2), math.log(2) - 0.3)
        text = render_report(RateCurve([point]), "csv")
        self.assertEqual(text, f"R,s_star,value,prior_0,prior_1\n0.3,1,{fmt(math.log(2) - 0.3)},0.5,0.5\n")

    def test_trial_schema(self):
        text = render_report(TrialTable([TrialSummary(2, 4, 10, 0.1, 0.2)]), "csv")
        self.assertTrue(text.startswith("n,M,R_nats,trials,mean_avg_err,mean_max_err,exponent_proxy\n"))

    def test_verification_json(self):
        summary = VerificationSummary([CheckRow("eq-at-zero", 1, 0.0, 1e-12)])
        doc = json.loads(render_report(summary, "json"))
        self.assertFalse(doc["violated"])
        self.assertEqual(doc["rows"][0]["status"], "ok")

    def test_unit_check(self):
        with self.assertRaises(ConfigError):
            check_unit("hartleys")
