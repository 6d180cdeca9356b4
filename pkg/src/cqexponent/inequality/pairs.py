"""
Monotone and antimonotone pairs of scalar functions, and the trace
inequality they induce for Hermitian A and X:

    Tr[f(A) X g(A) X] <= Tr[f(A) g(A) X^2]   (monotone pair)
    Tr[f(A) X g(A) X] >= Tr[f(A) g(A) X^2]   (antimonotone pair)
"""

from __future__ import annotations

import math
import re
import unittest
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Callable

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from ..common.errors import CQExponentError, SpectralDomainError
from ..common.settings import get_settings
from ..common.strategies import psd_arrays, s_values
from ..common.utils import clamp
from ..linalg.spectral import (
    HermitianMatrix,
    apply_spectral_fn,
    random_hermitian,
    x_log_x,
)
from .report import InequalityReport

SAMPLING_BOX = (1e-9, 1e3)

_POWER = re.compile(r"^x\^\(?(-?[0-9.eE+-]+)\)?$")

BASE_FUNCTIONS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "x": lambda x: x,
    "log": np.log,
    "exp": np.exp,
    "entropy": lambda x: -x_log_x(x),
    "neg": lambda x: -x,
}


class UnknownFunctionError(CQExponentError):
    pass


def resolve_function(name: str) -> Callable[[np.ndarray], np.ndarray]:
    """
    Look up a scalar function by name.

    Names are ``x``, ``log``, ``exp``, ``entropy`` (-x log x), ``neg``, powers
    ``x^p`` (``x^-1``, ``x^0.5``, ...) and compositions ``f@g`` meaning f(g(x)).
    """
    parts = [p.strip() for p in name.split("@")]
    funcs = []
    for part in parts:
        if part in BASE_FUNCTIONS:
            funcs.append(BASE_FUNCTIONS[part])
            continue
        m = _POWER.match(part)
        if m is None:
            raise UnknownFunctionError(f"unknown scalar function {part!r}")
        p = float(m.group(1))
        funcs.append(lambda x, p=p: np.power(x, p))

    def composed(x: np.ndarray) -> np.ndarray:
        for f in reversed(funcs):
            x = f(x)
        return x

    return composed


def power_name(p: float) -> str:
    return f"x^{p!r}"


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float
    closed_lo: bool = False
    closed_hi: bool = False

    def __post_init__(self):
        if not self.lo < self.hi:
            raise CQExponentError(f"empty interval ({self.lo}, {self.hi})")

    def contains(self, x: float, slack: float = 0.0) -> bool:
        above = x >= self.lo - slack if self.closed_lo else x > self.lo - slack
        below = x <= self.hi + slack if self.closed_hi else x < self.hi + slack
        return above and below

    def sampling_bounds(self) -> tuple[float, float]:
        """
        The interval truncated to [-1e3, 1e3]; an open endpoint at 0 becomes 1e-9.
        """
        lo = clamp(self.lo, -SAMPLING_BOX[1], SAMPLING_BOX[1])
        hi = clamp(self.hi, -SAMPLING_BOX[1], SAMPLING_BOX[1])
        if self.lo == 0.0 and not self.closed_lo:
            lo = SAMPLING_BOX[0]
        if self.hi == 0.0 and not self.closed_hi:
            hi = -SAMPLING_BOX[0]
        return lo, hi


POSITIVE_REALS = Interval(0.0, math.inf)


@dataclass(frozen=True)
class MonotonePairSpec:
    f_name: str
    g_name: str
    domain: Interval = POSITIVE_REALS

    @property
    def f(self) -> Callable[[np.ndarray], np.ndarray]:
        return resolve_function(self.f_name)

    @property
    def g(self) -> Callable[[np.ndarray], np.ndarray]:
        return resolve_function(self.g_name)


class PairKind(str, Enum):
    MONOTONE = "monotone"
    ANTIMONOTONE = "antimonotone"
    NEITHER = "neither"


@dataclass(frozen=True)
class PairCheck:
    kind: PairKind
    min_product: float
    max_product: float

    @property
    def worst_product(self) -> float:
        """
        The sampled product furthest on the wrong side for the reported kind.
        """
        if self.kind is PairKind.ANTIMONOTONE:
            return self.max_product
        return self.min_product

    @property
    def holds(self) -> bool:
        return self.kind is not PairKind.NEITHER


def monotone_pair_check(spec: MonotonePairSpec, sample_count: int, seed: int = 0) -> PairCheck:
    """
    Classify (f, g) from all pairwise products (f(a)-f(b))(g(a)-g(b)) on a sample.

    The sample is uniform on the truncated domain plus both endpoints.
    """
    lo, hi = spec.domain.sampling_bounds()
    rng = np.random.default_rng(seed)
    x = np.concatenate([[lo, hi], rng.uniform(lo, hi, size=max(sample_count - 2, 0))])
    with np.errstate(all="ignore"):
        fx = np.asarray(spec.f(x), dtype=float)
        gx = np.asarray(spec.g(x), dtype=float)
    bad = ~(np.isfinite(fx) & np.isfinite(gx))
    if np.any(bad):
        raise SpectralDomainError(float(x[np.argmax(bad)]), f"pair ({spec.f_name}, {spec.g_name})")
    products = (fx[:, None] - fx[None, :]) * (gx[:, None] - gx[None, :])
    scale = 1e-12 * (1 + float(np.max(np.abs(fx)))) * (1 + float(np.max(np.abs(gx))))
    lo_p, hi_p = float(np.min(products)), float(np.max(products))
    if lo_p >= -scale:
        kind = PairKind.MONOTONE
    elif hi_p <= scale:
        kind = PairKind.ANTIMONOTONE
    else:
        kind = PairKind.NEITHER
    return PairCheck(kind, lo_p, hi_p)


@lru_cache(maxsize=128)
def classify(spec: MonotonePairSpec) -> PairCheck:
    return monotone_pair_check(spec, get_settings().pair_samples, seed=0)


def trace_pair_gap(
    spec: MonotonePairSpec,
    a: HermitianMatrix,
    x: HermitianMatrix,
    kind: PairKind | None = None,
) -> InequalityReport:
    """
    Evaluate Tr[f(A) X g(A) X] against Tr[f(A) g(A) X^2], oriented by the pair kind.

    Pairs classified as neither are oriented like monotone pairs and flagged.
    """
    slack = get_settings().eigen_floor
    for lam in a.eigenvalues:
        if not spec.domain.contains(float(lam), slack):
            raise SpectralDomainError(float(lam), f"pair domain {spec.domain}")
    kind = classify(spec).kind if kind is None else kind
    fa = apply_spectral_fn(a, spec.f).data
    ga = apply_spectral_fn(a, spec.g).data
    xd = x.data
    crossed = np.trace(fa @ xd @ ga @ xd)
    direct = np.trace(fa @ ga @ xd @ xd)
    if kind is PairKind.ANTIMONOTONE:
        lhs, rhs = crossed, direct
    else:
        lhs, rhs = direct, crossed
    report = InequalityReport(
        inequality_id="trace-pair",
        lhs=lhs.real,
        rhs=rhs.real,
        imag_residue=max(abs(lhs.imag), abs(rhs.imag)),
        witness={
            "f": spec.f_name,
            "g": spec.g_name,
            "kind": kind.value,
            "A": {"re": a.data.real.tolist(), "im": a.data.imag.tolist()},
            "X": {"re": x.data.real.tolist(), "im": x.data.imag.tolist()},
        },
    )
    if kind is PairKind.NEITHER:
        report.notes.append("pair is neither monotone nor antimonotone on its domain")
    return report


def antimonotone_power_pair(s: float) -> MonotonePairSpec:
    """
    (x^s, x^-1) on (0, inf), antimonotone for s >= 0.
    """
    return MonotonePairSpec(power_name(s), "x^-1", POSITIVE_REALS)


class TestFunctionRegistry(unittest.TestCase):
    def test_names(self):
        x = np.array([0.5, 2.0])
        np.testing.assert_allclose(resolve_function("x^2")(x), [0.25, 4.0])
        np.testing.assert_allclose(resolve_function("x^-1")(x), [2.0, 0.5])
        np.testing.assert_allclose(resolve_function("x^(0.5)")(x), np.sqrt(x))
        np.testing.assert_allclose(resolve_function("entropy")(x), -x * np.log(x))
        np.testing.assert_allclose(resolve_function("log@x^2")(x), 2 * np.log(x))
        with self.assertRaises(UnknownFunctionError):
            resolve_function("sin")

    def test_interval(self):
        self.assertEqual(POSITIVE_REALS.sampling_bounds(), (1e-9, 1e3))
        self.assertEqual(Interval(-1, 1).sampling_bounds(), (-1, 1))
        self.assertFalse(POSITIVE_REALS.contains(0.0))
        self.assertTrue(Interval(0, 1, closed_lo=True).contains(0.0))


class TestMonotonePairCheck(unittest.TestCase):
    def test_power_and_inverse_are_antimonotone(self):
        check = monotone_pair_check(antimonotone_power_pair(0.5), 300, seed=1)
        self.assertIs(check.kind, PairKind.ANTIMONOTONE)
        self.assertLessEqual(check.max_product, 0.0)

    def test_identity_pair_is_monotone(self):
        check = monotone_pair_check(MonotonePairSpec("x", "x"), 200, seed=1)
        self.assertIs(check.kind, PairKind.MONOTONE)
        self.assertGreaterEqual(check.worst_product, 0.0)

    def test_square_and_identity_straddling_zero(self):
        check = monotone_pair_check(MonotonePairSpec("x^2", "x", Interval(-1, 1)), 200, seed=1)
        self.assertIs(check.kind, PairKind.NEITHER)
        self.assertLess(check.min_product, 0)
        self.assertGreater(check.max_product, 0)

    def test_domain_error(self):
        with self.assertRaises(SpectralDomainError):
            monotone_pair_check(MonotonePairSpec("log", "x", Interval(-1, 1)), 50)


class TestTracePairGap(unittest.TestCase):
    def _pd(self, rng, dim):
        g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
        return HermitianMatrix(g @ g.conj().T + 0.1 * np.eye(dim))

    def test_identity_x_gives_zero(self):
        rng = np.random.default_rng(41)
        a = self._pd(rng, 4)
        report = trace_pair_gap(antimonotone_power_pair(0.7), a, HermitianMatrix.identity(4))
        self.assertLessEqual(abs(report.gap), 1e-10 * report.scale)

    def test_identity_a_gives_zero(self):
        rng = np.random.default_rng(42)
        x = random_hermitian(rng, 3)
        report = trace_pair_gap(antimonotone_power_pair(0.3), HermitianMatrix.identity(3), x)
        self.assertLessEqual(abs(report.gap), 1e-12 * report.scale)

    @settings(max_examples=60)
    @given(psd_arrays(), s_values, st.integers(0, 2**32 - 1))
    def test_antimonotone_random(self, rho, s, seed):
        a = HermitianMatrix(rho)
        x = random_hermitian(np.random.default_rng(seed), a.dim)
        report = trace_pair_gap(antimonotone_power_pair(s), a, x)
        self.assertTrue(report.holds(1e-9), report.gap)
        self.assertLessEqual(report.imag_residue, 1e-10 * report.scale)

    def test_monotone_random(self):
        rng = np.random.default_rng(44)
        spec = MonotonePairSpec("x^0.5", "log")
        self.assertIs(classify(spec).kind, PairKind.MONOTONE)
        for _ in range(20):
            report = trace_pair_gap(spec, self._pd(rng, 3), random_hermitian(rng, 3))
            self.assertTrue(report.holds(1e-9))

    def test_spectrum_outside_domain(self):
        with self.assertRaises(SpectralDomainError):
            trace_pair_gap(
                antimonotone_power_pair(0.5), HermitianMatrix.diagonal([-1.0, 1.0]), HermitianMatrix.identity(2)
            )
