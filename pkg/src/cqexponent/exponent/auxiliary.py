"""
The auxiliary function E_q(pi, s) = -ln Tr[(sum_i pi_i S_i^{1/(1+s)})^{1+s}]
of a classical-quantum channel, its finite-difference derivatives, the
classical (diagonal) reduction and concavity diagnostics on an s grid.

All values are in nats.
"""

from __future__ import annotations

import math
import unittest
from dataclasses import dataclass
from typing import Callable, Literal, Sequence

import numpy as np
import numpy.typing as npt
from hypothesis import given, settings
from hypothesis import strategies as st

from ..channel.model import (
    Channel,
    DensityMatrix,
    Prior,
    binary_symmetric_channel,
    diagonal_channel,
    holevo_quantity,
    identical_states_channel,
    mixed_power_state,
    orthogonal_pure_channel,
)
from ..common.errors import ExponentDomainError, PriorError
from ..common.settings import get_settings
from ..common.strategies import channels, s_values
from ..linalg.spectral import random_unitary, trace_of_fn

Side = Literal["auto", "central", "forward", "backward"]


def check_s(s: float) -> float:
    s = float(s)
    if not -1.0 < s <= 1.0:
        raise ExponentDomainError(f"s must lie in (-1, 1], got {s!r}")
    return s


def eq_aux(channel: Channel, prior: Prior, s: float) -> float:
    s = check_s(s)
    a = mixed_power_state(channel, prior, s)
    if s == 0.0:
        return -math.log(a.trace())
    return -math.log(trace_of_fn(a, lambda x: np.power(x, 1.0 + s), support_only=True))


def _one_sided(f: Callable[[float], float], s: float, h: float, direction: int) -> float:
    # second-order one-sided difference
    return direction * (-3 * f(s) + 4 * f(s + direction * h) - f(s + 2 * direction * h)) / (2 * h)


def _central(f: Callable[[float], float], s: float, h: float) -> float:
    return (f(s + h) - f(s - h)) / (2 * h)


def richardson_derivative(
    f: Callable[[float], float],
    s: float,
    step: float,
    side: Literal["central", "forward", "backward"],
) -> float:
    """
    Finite difference at steps h and h/2, combined by one Richardson level.

    Both stencils used here have O(h^2) error, so the combination is (4 D(h/2) - D(h)) / 3.
    """
    if side == "central":
        coarse, fine = _central(f, s, step), _central(f, s, step / 2)
    else:
        direction = 1 if side == "forward" else -1
        coarse, fine = _one_sided(f, s, step, direction), _one_sided(f, s, step / 2, direction)
    return (4 * fine - coarse) / 3


def _resolve_side(s: float, step: float, side: Side) -> Literal["central", "forward", "backward"]:
    if side != "auto":
        return side
    if s == 0.0 or s - 2 * step <= -1.0:
        return "forward"
    if s + step > 1.0:
        return "backward"
    return "central"


def eq_derivative(
    channel: Channel, prior: Prior, s: float, step: float | None = None, side: Side = "auto"
) -> float:
    """
    dE_q/ds by Richardson-extrapolated finite differences.

    One-sided at s = 0 (the right derivative) and at s = 1.
    """
    s = check_s(s)
    step = get_settings().fd_step if step is None else step
    return richardson_derivative(
        lambda t: eq_aux(channel, prior, t), s, step, _resolve_side(s, step, side)
    )


def eq_second_derivative(
    channel: Channel, prior: Prior, s: float, step: float | None = None
) -> float:
    s = check_s(s)
    step = 10 * get_settings().fd_step if step is None else step
    if s + step > 1.0:
        s = 1.0 - step
    if s - step <= -1.0:
        s = -1.0 + 2 * step
    f = lambda t: eq_aux(channel, prior, t)
    return (f(s + step) - 2 * f(s) + f(s - step)) / step**2


def gallager_e0_scalar(transition: npt.ArrayLike, prior: Prior, s: float) -> float:
    """
    Classical E_0: -ln sum_j (sum_i pi_i p_i(j)^{1/(1+s)})^{1+s}, scalars only.
    """
    s = check_s(s)
    p = np.asarray(transition, dtype=float)
    if p.ndim != 2 or p.shape[0] != prior.size:
        raise PriorError(f"transition matrix shape {p.shape} does not match prior size {prior.size}")
    if np.any(p < 0):
        raise ExponentDomainError("transition matrix has negative entries")
    if np.max(np.abs(p.sum(axis=1) - 1)) > get_settings().prior_tol:
        raise ExponentDomainError("transition matrix rows must sum to 1")
    w = prior.as_array()
    rows = w > 0
    inner = w[rows] @ np.power(p[rows], 1.0 / (1.0 + s))
    return -math.log(float(np.sum(np.power(inner, 1.0 + s))))


@dataclass
class ConcavityReport:
    s_grid: list[float]
    values: list[float]
    second_differences: list[float]
    forward_differences: list[float]
    max_second_difference: float
    monotone_violation: float

    def __post_init__(self):
        assert len(self.values) == len(self.s_grid)
        assert len(self.second_differences) == len(self.s_grid) - 2
        assert len(self.forward_differences) == len(self.s_grid) - 1

    @property
    def scale(self) -> float:
        return 1.0 + max(abs(v) for v in self.values)

    def is_concave(self, tol: float = 1e-8) -> bool:
        return self.max_second_difference <= tol * self.scale

    def is_monotone(self, tol: float = 1e-8) -> bool:
        return self.monotone_violation <= tol


def second_differences(grid: Sequence[float], values: Sequence[float]) -> list[float]:
    """
    Nonuniform-grid second differences, scaled so that a uniform grid gives
    v[k-1] - 2 v[k] + v[k+1].
    """
    out = []
    for k in range(1, len(grid) - 1):
        h1 = grid[k] - grid[k - 1]
        h2 = grid[k + 1] - grid[k]
        out.append(2 * (h2 * values[k - 1] - (h1 + h2) * values[k] + h1 * values[k + 1]) / (h1 + h2))
    return out


def sign_changes(differences: Sequence[float], tol: float) -> int:
    """
    Number of strict sign changes in a sequence, ignoring entries within tol of zero.
    """
    signs = [1 if d > tol else -1 for d in differences if abs(d) > tol]
    return sum(1 for a, b in zip(signs, signs[1:]) if a != b)


def default_grid(points: int = 21, lo: float = 0.0, hi: float = 1.0) -> list[float]:
    return np.linspace(lo, hi, points).tolist()


def concavity_scan(
    channel: Channel, prior: Prior, grid: Sequence[float] | None = None
) -> ConcavityReport:
    grid = default_grid() if grid is None else [float(s) for s in grid]
    if len(grid) < 3:
        raise ExponentDomainError("a concavity scan needs at least 3 grid points")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ExponentDomainError("grid must be strictly increasing")
    for s in grid:
        check_s(s)
    values = [eq_aux(channel, prior, s) for s in grid]
    second = second_differences(grid, values)
    forward = [b - a for a, b in zip(values, values[1:])]
    return ConcavityReport(
        s_grid=grid,
        values=values,
        second_differences=second,
        forward_differences=forward,
        max_second_difference=max(second),
        monotone_violation=max(0.0, -min(forward)),
    )


class TestEqAux(unittest.TestCase):
    @settings(max_examples=50)
    @given(channels(max_letters=4, max_dim=4))
    def test_zero_at_s_zero(self, channel_and_prior):
        self.assertLessEqual(abs(eq_aux(*channel_and_prior, 0.0)), 1e-12)

    def test_orthogonal_closed_form(self):
        channel, prior = orthogonal_pure_channel(2), Prior.uniform(2)
        for s in np.linspace(0, 1, 21):
            self.assertAlmostEqual(eq_aux(channel, prior, s), s * math.log(2), delta=1e-12)
        self.assertAlmostEqual(eq_aux(channel, prior, -0.5), -0.5 * math.log(2), delta=1e-12)

    def test_bsc(self):
        value = eq_aux(binary_symmetric_channel(0.1), Prior.uniform(2), 1.0)
        self.assertAlmostEqual(value, 0.2231435513, delta=1e-10)
        self.assertAlmostEqual(value, -math.log(0.8), delta=1e-12)

    def test_domain(self):
        channel, prior = orthogonal_pure_channel(2), Prior.uniform(2)
        for s in (-1.0, -1.5, 1.5):
            with self.assertRaises(ExponentDomainError):
                eq_aux(channel, prior, s)

    def test_single_letter_is_zero(self):
        channel = Channel((DensityMatrix(np.diag([0.7, 0.3])),))
        for s in (-0.5, 0.5, 1.0):
            self.assertAlmostEqual(eq_aux(channel, Prior((1.0,)), s), 0.0, delta=1e-12)

    def test_diagonal_reduction(self):
        from ..channel.ensembles import random_channel

        rng = np.random.default_rng(32)
        for _ in range(50):
            channel, prior = random_channel(rng, int(rng.integers(1, 5)), int(rng.integers(2, 6)), "diagonal")
            t = channel.transition_matrix()
            t = t / t.sum(axis=1, keepdims=True)
            for s in (-0.5, 0.0, 0.25, 0.5, 0.75, 1.0):
                self.assertLessEqual(
                    abs(eq_aux(channel, prior, s) - gallager_e0_scalar(t, prior, s)), 1e-12
                )

    @settings(max_examples=30)
    @given(channels(), s_values, st.integers(0, 2**32 - 1))
    def test_unitary_and_permutation_invariance(self, channel_and_prior, s, seed):
        channel, prior = channel_and_prior
        rotated = channel.conjugate_by(random_unitary(np.random.default_rng(seed), channel.dim))
        order = list(reversed(range(channel.alphabet_size)))
        permuted = Prior(tuple(prior.weights[i] for i in order))
        e = eq_aux(channel, prior, s)
        self.assertAlmostEqual(eq_aux(rotated, prior, s), e, delta=1e-10)
        self.assertAlmostEqual(eq_aux(channel.permuted(order), permuted, s), e, delta=1e-12)

    @settings(max_examples=60)
    @given(channels(), s_values)
    def test_nonnegative_on_unit_interval(self, channel_and_prior, s):
        self.assertGreater(eq_aux(*channel_and_prior, s), -1e-10)

    def test_zero_weight_letters_are_dropped(self):
        singular = DensityMatrix(np.diag([1.0, 0.0]))
        channel = Channel((singular, DensityMatrix(np.diag([0.5, 0.5]))))
        value = eq_aux(channel, Prior((0.0, 1.0)), 0.5)
        self.assertAlmostEqual(value, 0.0, delta=1e-12)


class TestGallager(unittest.TestCase):
    def test_noiseless(self):
        for s in (0.0, 0.3, 1.0):
            self.assertAlmostEqual(gallager_e0_scalar(np.eye(2), Prior.uniform(2), s), s * math.log(2), delta=1e-14)

    def test_bsc(self):
        t = [[0.9, 0.1], [0.1, 0.9]]
        self.assertAlmostEqual(gallager_e0_scalar(t, Prior.uniform(2), 1.0), 0.2231435513, delta=1e-10)
        self.assertEqual(gallager_e0_scalar(t, Prior.uniform(2), 0.0), 0.0)

    def test_rejects_bad_rows(self):
        with self.assertRaises(ExponentDomainError):
            gallager_e0_scalar([[1.2, -0.2], [0.5, 0.5]], Prior.uniform(2), 0.5)
        with self.assertRaises(ExponentDomainError):
            gallager_e0_scalar([[0.5, 0.4], [0.5, 0.5]], Prior.uniform(2), 0.5)


class TestDerivative(unittest.TestCase):
    def test_orthogonal(self):
        channel, prior = orthogonal_pure_channel(2), Prior.uniform(2)
        for s in (0.0, 0.4, 1.0):
            self.assertAlmostEqual(eq_derivative(channel, prior, s), math.log(2), delta=1e-8)

    def test_identical_states(self):
        channel = identical_states_channel(DensityMatrix(np.diag([0.6, 0.4])), 2)
        self.assertAlmostEqual(eq_derivative(channel, Prior.uniform(2), 0.5), 0.0, delta=1e-9)

    def test_slope_at_zero_is_holevo(self):
        from ..channel.ensembles import random_channel

        rng = np.random.default_rng(35)
        for _ in range(20):
            channel, prior = random_channel(rng, int(rng.integers(2, 5)), int(rng.integers(2, 6)))
            self.assertAlmostEqual(
                eq_derivative(channel, prior, 0.0), holevo_quantity(channel, prior), delta=1e-5
            )

    def test_sides(self):
        self.assertEqual(_resolve_side(0.0, 1e-4, "auto"), "forward")
        self.assertEqual(_resolve_side(1.0, 1e-4, "auto"), "backward")
        self.assertEqual(_resolve_side(0.5, 1e-4, "auto"), "central")
        self.assertEqual(_resolve_side(-0.9999, 1e-4, "auto"), "forward")

    def test_second_derivative_nonpositive(self):
        channel = diagonal_channel([[0.7, 0.2, 0.1], [0.1, 0.3, 0.6]])
        for s in (0.1, 0.5, 0.9):
            self.assertLessEqual(eq_second_derivative(channel, Prior((0.4, 0.6)), s), 1e-6)


class TestConcavityScan(unittest.TestCase):
    def test_orthogonal_is_linear(self):
        report = concavity_scan(orthogonal_pure_channel(2), Prior.uniform(2))
        self.assertEqual(len(report.s_grid), 21)
        for d in report.second_differences:
            self.assertLessEqual(abs(d), 1e-10)
        self.assertTrue(report.is_monotone())

    def test_single_letter(self):
        channel = Channel((DensityMatrix(np.diag([0.2, 0.8])),))
        report = concavity_scan(channel, Prior((1.0,)))
        for v in report.values:
            self.assertAlmostEqual(v, 0.0, delta=1e-12)

    @settings(max_examples=20)
    @given(channels(max_letters=4))
    def test_random_channels_concave_and_monotone(self, channel_and_prior):
        report = concavity_scan(*channel_and_prior)
        self.assertTrue(report.is_concave(1e-8), report.max_second_difference)
        self.assertTrue(report.is_monotone(1e-8), report.monotone_violation)

    def test_nonuniform_grid(self):
        grid = [0.0, 0.1, 0.4, 1.0]
        values = [2 * s + 1 for s in grid]
        for d in second_differences(grid, values):
            self.assertAlmostEqual(d, 0.0, delta=1e-15)

    def test_rejects_bad_grid(self):
        channel, prior = orthogonal_pure_channel(2), Prior.uniform(2)
        with self.assertRaises(ExponentDomainError):
            concavity_scan(channel, prior, [0.0, 0.5])
        with self.assertRaises(ExponentDomainError):
            concavity_scan(channel, prior, [0.0, 0.5, 0.4])

    def test_sign_changes(self):
        self.assertEqual(sign_changes([1, 0.5, 0, -0.2, -1], 1e-9), 1)
        self.assertEqual(sign_changes([1, -1, 1], 1e-9), 2)
        self.assertEqual(sign_changes([0, 0, 0], 1e-9), 0)
