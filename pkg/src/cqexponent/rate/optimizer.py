"""
Random-coding lower bound E_r(R) = max_pi sup_{0 < s <= 1} [E_q(pi, s) - s R].

The inner supremum is a golden-section search, which the concavity of
E_q on [0, 1] makes exact up to the s tolerance. The outer maximum is a
multi-start projected ascent on the probability simplex and carries no
global-optimality guarantee.
"""

from __future__ import annotations

import math
import unittest
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import numpy.typing as npt
from hypothesis import given, settings
from hypothesis import strategies as st

from ..channel.model import (
    Channel,
    DensityMatrix,
    Prior,
    binary_symmetric_channel,
    holevo_quantity,
    identical_states_channel,
    orthogonal_pure_channel,
)
from ..common.errors import ExponentDomainError
from ..common.seeding import instance_rng
from ..common.settings import get_settings
from ..common.strategies import channels
from ..common.utils import log, timed
from ..exponent.auxiliary import eq_aux, sign_changes

INV_PHI = (math.sqrt(5) - 1) / 2  # 1 / phi
INV_PHI_SQUARE = (3 - math.sqrt(5)) / 2  # 1 / phi^2

# generator stream for the Dirichlet starts
ASCENT_STREAM = 1


@dataclass(frozen=True)
class RateExponentPoint:
    R: float
    s_star: float
    prior_star: Prior
    value: float

    def __post_init__(self):
        if self.value < -1e-10:
            raise ExponentDomainError(f"negative exponent {self.value!r} at R = {self.R!r}")
        if not 0.0 <= self.s_star <= 1.0:
            raise ExponentDomainError(f"s_star {self.s_star!r} outside [0, 1]")


def golden_section_max(
    f: Callable[[float], float], a: float, b: float, tol: float = 1e-8
) -> tuple[float, float]:
    """
    Golden-section search for the maximum of a unimodal f on [a, b].

    Returns (x, f(x)) with x within ``tol`` of the maximiser. Both endpoints are
    evaluated as well, so monotone functions return the right endpoint exactly.
    """
    a, b = min(a, b), max(a, b)
    h = b - a
    best = max((f(a), -a, a), (f(b), -b, b))
    if h <= tol:
        return best[2], best[0]

    # steps needed to bring the bracket below tol
    n = int(math.ceil(math.log(tol / h) / math.log(INV_PHI)))

    c = a + INV_PHI_SQUARE * h
    d = a + INV_PHI * h
    yc = f(c)
    yd = f(d)

    for _ in range(n - 1):
        if yc > yd:
            b = d
            d = c
            yd = yc
            h = INV_PHI * h
            c = a + INV_PHI_SQUARE * h
            yc = f(c)
        else:
            a = c
            c = d
            yc = yd
            h = INV_PHI * h
            d = a + INV_PHI * h
            yd = f(d)

    interior = (yc, -c, c) if yc > yd else (yd, -d, d)
    best = max(best, interior)
    return best[2], best[0]


def sup_over_s(channel: Channel, prior: Prior, R: float) -> tuple[float, float]:
    """
    (s_star, value) maximising E_q(pi, s) - s R over [0, 1].

    A nonpositive supremum is reported as (0, 0): E_q(pi, 0) = 0 is the limit
    of the open interval at its left end.
    """
    if not R >= 0:
        raise ExponentDomainError(f"rate must be nonnegative, got {R!r}")
    cache: dict[float, float] = {}

    def objective(s: float) -> float:
        if s not in cache:
            cache[s] = 0.0 if s == 0.0 else eq_aux(channel, prior, s) - s * R
        return cache[s]

    s_star, value = golden_section_max(objective, 0.0, 1.0, get_settings().gss_tol)
    if value <= 0.0:
        return 0.0, 0.0
    return s_star, value


def unit_simplex_projection(c: npt.ArrayLike) -> np.ndarray:
    """
    Solution of min ||x - c||_2^2 subject to sum(x) = 1 and x >= 0.
    """
    c = np.asarray(c, dtype=float)
    n = len(c)
    a = -np.sort(-c)
    lambdas = (np.cumsum(a) - 1) / np.arange(1, n + 1)
    for k in range(n - 1, -1, -1):
        if a[k] > lambdas[k]:
            return np.maximum(c - lambdas[k], 0)
    raise AssertionError("simplex projection found no threshold")


@dataclass
class AscentResult:
    prior: Prior
    value: float
    iterations: int
    improved: bool


def simplex_ascent(
    objective: Callable[[Prior], float],
    start: npt.ArrayLike,
    max_iter: int | None = None,
    fd_step: float | None = None,
    min_step: float = 1e-10,
) -> AscentResult:
    """
    Projected finite-difference gradient ascent with step halving.

    The gradient is taken on the positive orthant through w -> objective(w / sum(w)),
    so every shifted point stays a valid prior.
    """
    limits = get_settings()
    max_iter = limits.ascent_max_iter if max_iter is None else max_iter
    h = limits.fd_step if fd_step is None else fd_step
    x = unit_simplex_projection(start)
    fx = objective(Prior.normalized(x))
    first = fx
    step = 1.0
    iterations = 0
    if len(x) == 1:
        return AscentResult(Prior.normalized(x), fx, 0, False)
    for iterations in range(1, max_iter + 1):
        grad = np.empty(len(x))
        for i in range(len(x)):
            shifted = x.copy()
            shifted[i] += h
            grad[i] = (objective(Prior.normalized(shifted)) - fx) / h
        accepted = False
        while step >= min_step:
            candidate = unit_simplex_projection(x + step * grad)
            if np.max(np.abs(candidate - x)) < 1e-14:
                break
            fc = objective(Prior.normalized(candidate))
            if fc > fx:
                gain = fc - fx
                x, fx = candidate, fc
                step = min(2 * step, 1.0)
                accepted = True
                break
            step /= 2
        if not accepted or gain <= 1e-15 * (1 + abs(fx)):
            break
    return AscentResult(Prior.normalized(x), fx, iterations, fx > first)


def _starting_points(size: int, starts: int, seed: int) -> list[np.ndarray]:
    points = [Prior.uniform(size).as_array()]
    if size > 1:
        points.extend(Prior.vertex(size, i).as_array() for i in range(size))
    k = 0
    while len(points) < starts:
        points.append(instance_rng(seed, k, stream=ASCENT_STREAM).dirichlet(np.ones(size)))
        k += 1
    return points[: max(starts, 1)]


def _best(results: Sequence[AscentResult]) -> AscentResult:
    # largest value, then lexicographically smallest prior
    return min(results, key=lambda r: (-r.value, r.prior.weights))


def maximize_over_simplex(
    objective: Callable[[Prior], float],
    size: int,
    starts: int | None = None,
    seed: int = 0,
    extra_starts: Sequence[npt.ArrayLike] = (),
) -> AscentResult:
    starts = get_settings().ascent_starts if starts is None else starts
    results = []
    for k, point in enumerate([*_starting_points(size, starts, seed), *extra_starts]):
        result = simplex_ascent(objective, point)
        if not result.improved:
            log(f"  start {k}: no improvement over {result.value!r}")
        results.append(result)
    return _best(results)


def max_over_prior(
    channel: Channel,
    R: float,
    starts: int | None = None,
    seed: int = 0,
    extra_starts: Sequence[npt.ArrayLike] = (),
) -> RateExponentPoint:
    """
    max over priors of :func:`sup_over_s`, by multi-start ascent.

    Starts are the uniform prior, every vertex and seeded Dirichlet draws.
    """
    if not R >= 0:
        raise ExponentDomainError(f"rate must be nonnegative, got {R!r}")
    best = maximize_over_simplex(
        lambda p: sup_over_s(channel, p, R)[1], channel.alphabet_size, starts, seed, extra_starts
    )
    s_star, value = sup_over_s(channel, best.prior, R)
    return RateExponentPoint(float(R), s_star, best.prior, value)


def curve(
    channel: Channel, R_grid: Sequence[float], starts: int | None = None, seed: int = 0
) -> list[RateExponentPoint]:
    """
    E_r on an increasing rate grid; each point also starts from the previous optimum.
    """
    grid = [float(r) for r in R_grid]
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise ExponentDomainError("rate grid must be increasing")
    points: list[RateExponentPoint] = []
    with timed(f"curve over {len(grid)} rates"):
        for R in grid:
            warm = [points[-1].prior_star.as_array()] if points else []
            points.append(max_over_prior(channel, R, starts, seed, warm))
            log(f"  R = {R!r}: value {points[-1].value!r}")
    return points


def capacity_ascent(channel: Channel, starts: int | None = None, seed: int = 0) -> AscentResult:
    """
    max over priors of the Holevo quantity, by the same multi-start ascent.
    """
    return maximize_over_simplex(lambda p: holevo_quantity(channel, p), channel.alphabet_size, starts, seed)


def capacity_estimate(channel: Channel, starts: int | None = None, seed: int = 0) -> float:
    return capacity_ascent(channel, starts, seed).value


def objective_sign_changes(
    channel: Channel, prior: Prior, R: float, points: int = 101, tol: float = 1e-9
) -> int:
    """
    Sign changes of the forward differences of E_q(pi, s) - s R on a uniform grid of [0, 1].
    """
    grid = np.linspace(0.0, 1.0, points)
    values = [eq_aux(channel, prior, float(s)) - float(s) * R for s in grid]
    scale = 1.0 + max(abs(v) for v in values)
    return sign_changes(np.diff(values), tol * scale)


def simplex_grid(size: int, step: float) -> list[np.ndarray]:
    """
    All priors whose weights are multiples of ``step``.
    """
    n = int(round(1 / step))

    def compositions(remaining: int, parts: int):
        if parts == 1:
            yield (remaining,)
            return
        for k in range(remaining + 1):
            for rest in compositions(remaining - k, parts - 1):
                yield (k, *rest)

    return [np.array(c, dtype=float) / n for c in compositions(n, size)]


class TestGoldenSection(unittest.TestCase):
    def test_concave_quadratic(self):
        x, fx = golden_section_max(lambda s: -(s - 0.3) ** 2, 0.0, 1.0, 1e-8)
        self.assertAlmostEqual(x, 0.3, delta=1e-8)
        self.assertAlmostEqual(fx, 0.0, delta=1e-15)

    def test_monotone_hits_endpoint(self):
        self.assertEqual(golden_section_max(lambda s: s, 0.0, 1.0), (1.0, 1.0))
        self.assertEqual(golden_section_max(lambda s: -s, 0.0, 1.0), (0.0, 0.0))


class TestSupOverS(unittest.TestCase):
    def test_orthogonal_channel(self):
        ch = orthogonal_pure_channel(2)
        s_star, value = sup_over_s(ch, Prior.uniform(2), 0.3)
        self.assertAlmostEqual(value, math.log(2) - 0.3, delta=1e-12)
        self.assertAlmostEqual(s_star, 1.0, delta=1e-6)
        self.assertAlmostEqual(value, 0.393147, delta=1e-6)

    def test_rate_above_capacity(self):
        self.assertEqual(sup_over_s(orthogonal_pure_channel(2), Prior.uniform(2), 1.0), (0.0, 0.0))

    def test_identical_states(self):
        ch = identical_states_channel(DensityMatrix.maximally_mixed(2))
        self.assertEqual(sup_over_s(ch, Prior.uniform(2), 0.1)[1], 0.0)

    def test_negative_rate(self):
        with self.assertRaises(ExponentDomainError):
            sup_over_s(orthogonal_pure_channel(2), Prior.uniform(2), -0.1)

    @settings(max_examples=30)
    @given(channels(max_letters=4, min_dim=2, max_dim=4), st.floats(0.0, 0.5))
    def test_unimodal_objective(self, channel_and_prior, R):
        self.assertLessEqual(objective_sign_changes(*channel_and_prior, R), 1)


class TestSimplex(unittest.TestCase):
    def test_projection(self):
        np.testing.assert_allclose(unit_simplex_projection([0.2, 0.8]), [0.2, 0.8])
        np.testing.assert_allclose(unit_simplex_projection([2.0, 0.0]), [1.0, 0.0])
        np.testing.assert_allclose(unit_simplex_projection([1.0, 1.0, 1.0]), [1 / 3] * 3)

    def test_grid(self):
        grid = simplex_grid(3, 0.5)
        self.assertEqual(len(grid), 6)
        for p in grid:
            self.assertAlmostEqual(p.sum(), 1.0)


class TestMaxOverPrior(unittest.TestCase):
    def test_orthogonal_channel(self):
        point = max_over_prior(orthogonal_pure_channel(2), 0.3, starts=5)
        self.assertAlmostEqual(point.value, math.log(2) - 0.3, delta=1e-6)
        self.assertAlmostEqual(point.s_star, 1.0, delta=1e-6)

    def test_symmetric_channel(self):
        point = max_over_prior(binary_symmetric_channel(0.1), 0.1, starts=5)
        np.testing.assert_allclose(point.prior_star.weights, [0.5, 0.5], atol=1e-3)

    def test_single_letter(self):
        ch = identical_states_channel(DensityMatrix.maximally_mixed(2), 1)
        point = max_over_prior(ch, 0.2)
        self.assertEqual(point.prior_star.weights, (1.0,))
        self.assertEqual(point.value, 0.0)

    def test_deterministic(self):
        from ..channel.ensembles import random_channel

        ch, _ = random_channel(np.random.default_rng(72), 3, 2)
        a = max_over_prior(ch, 0.05, starts=6, seed=4)
        b = max_over_prior(ch, 0.05, starts=6, seed=4)
        self.assertEqual(a, b)

    def test_grid_cross_check(self):
        from ..channel.ensembles import random_channel

        rng = np.random.default_rng(73)
        ch, _ = random_channel(rng, 2, 2)
        R = 0.05
        point = max_over_prior(ch, R, starts=6)
        grid_best = max(sup_over_s(ch, Prior.normalized(p), R)[1] for p in simplex_grid(2, 0.02))
        self.assertGreaterEqual(point.value, grid_best - 1e-6)

    def test_grid_cross_check_three_letters(self):
        from ..channel.ensembles import random_channel

        ch, _ = random_channel(np.random.default_rng(74), 3, 2)
        R = 0.05
        point = max_over_prior(ch, R, starts=8)
        grid_best = max(sup_over_s(ch, Prior.normalized(p), R)[1] for p in simplex_grid(3, 0.05))
        self.assertGreaterEqual(point.value, grid_best - 1e-6)
        self.assertAlmostEqual(sum(point.prior_star.weights), 1.0, delta=1e-12)


class TestCurve(unittest.TestCase):
    def test_orthogonal_channel(self):
        points = curve(orthogonal_pure_channel(2), [0.0, 0.2, 0.4, 0.6], starts=3)
        for point, R in zip(points, [0.0, 0.2, 0.4, 0.6]):
            self.assertAlmostEqual(point.value, math.log(2) - R, delta=1e-6)

    def test_identical_states(self):
        ch = identical_states_channel(DensityMatrix.maximally_mixed(2))
        self.assertEqual([p.value for p in curve(ch, [0.0, 0.1, 0.2], starts=3)], [0.0] * 3)

    def test_nonincreasing_and_convex(self):
        ch = binary_symmetric_channel(0.1)
        grid = np.linspace(0.0, 0.5, 11)
        values = [p.value for p in curve(ch, grid, starts=4)]
        self.assertTrue(all(b <= a + 1e-8 for a, b in zip(values, values[1:])))
        second = np.diff(values, 2)
        self.assertGreaterEqual(second.min(), -1e-6)

    def test_grid_must_increase(self):
        with self.assertRaises(ExponentDomainError):
            curve(orthogonal_pure_channel(2), [0.2, 0.1])


class TestCapacity(unittest.TestCase):
    def test_orthogonal(self):
        self.assertAlmostEqual(capacity_estimate(orthogonal_pure_channel(2), starts=5), math.log(2), delta=1e-6)

    def test_identical(self):
        ch = identical_states_channel(DensityMatrix.maximally_mixed(3))
        self.assertAlmostEqual(capacity_estimate(ch, starts=3), 0.0, delta=1e-12)

    def test_binary_symmetric(self):
        ch = binary_symmetric_channel(0.1)
        capacity = capacity_estimate(ch, starts=5)
        self.assertAlmostEqual(capacity, 0.368064, delta=1e-5)
        self.assertLessEqual(max_over_prior(ch, capacity + 1e-3, starts=3).value, 1e-3)
