"""
Random state ensembles for property tests and fuzz campaigns.
"""

from __future__ import annotations

import unittest
from enum import Enum

import numpy as np

from ..common.settings import get_settings
from .model import Channel, DensityMatrix, Prior


class StateEnsemble(str, Enum):
    HAAR_MIXED = "haar-mixed"
    RANK_DEFICIENT = "rank-deficient"
    DIAGONAL = "diagonal"
    NEAR_IDENTICAL = "near-identical"

    @property
    def support_restricted(self) -> bool:
        return self is StateEnsemble.RANK_DEFICIENT


def _normalize(m: np.ndarray) -> np.ndarray:
    m = (m + m.conj().T) * 0.5
    return m / np.trace(m).real


def lift_floor(m: np.ndarray, floor: float) -> np.ndarray:
    """
    Mix with the identity so every eigenvalue is at least ``floor``; trace stays 1.
    """
    dim = m.shape[0]
    t = min(floor * dim, 0.5)
    return (1 - t) * m + (t / dim) * np.eye(dim)


def haar_mixed_state(
    rng: np.random.Generator, dim: int, rank: int | None = None, floor: float | None = None
) -> DensityMatrix:
    """
    G G^H / Tr with complex standard-normal G of shape dim x rank.
    """
    rank = dim if rank is None else rank
    g = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    m = _normalize(g @ g.conj().T)
    if floor is not None:
        m = lift_floor(m, floor)
    return DensityMatrix(m)


def diagonal_state(rng: np.random.Generator, dim: int, floor: float | None = None) -> DensityMatrix:
    p = rng.dirichlet(np.ones(dim))
    m = np.diag(p).astype(np.complex128)
    if floor is not None:
        m = lift_floor(m, floor)
    return DensityMatrix(m)


def near_identical_states(
    rng: np.random.Generator, count: int, dim: int, epsilon: float = 1e-3, floor: float | None = None
) -> list[DensityMatrix]:
    """
    A common state plus independent epsilon-sized Hermitian perturbations.
    """
    floor = get_settings().pd_floor if floor is None else floor
    base = lift_floor(haar_mixed_state(rng, dim).data, max(floor, 2 * epsilon))
    states = []
    for _ in range(count):
        g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
        h = (g + g.conj().T) * 0.5
        h -= np.eye(dim) * (np.trace(h).real / dim)
        h /= max(np.linalg.norm(h, 2), 1e-300)
        states.append(DensityMatrix(_normalize(base + epsilon * h)))
    return states


def random_prior(rng: np.random.Generator, size: int) -> Prior:
    return Prior.normalized(rng.dirichlet(np.ones(size)))


def random_states(
    rng: np.random.Generator,
    count: int,
    dim: int,
    ensemble: StateEnsemble | str = StateEnsemble.HAAR_MIXED,
    epsilon: float = 1e-3,
) -> list[DensityMatrix]:
    """
    ``count`` states of dimension ``dim``; all ensembles except rank-deficient
    are positive definite with eigenvalues at least ``pd_floor``.
    """
    ensemble = StateEnsemble(ensemble)
    floor = get_settings().pd_floor
    match ensemble:
        case StateEnsemble.HAAR_MIXED:
            return [haar_mixed_state(rng, dim, floor=floor) for _ in range(count)]
        case StateEnsemble.RANK_DEFICIENT:
            return [
                haar_mixed_state(rng, dim, rank=int(rng.integers(1, max(dim - 1, 1) + 1)))
                for _ in range(count)
            ]
        case StateEnsemble.DIAGONAL:
            return [diagonal_state(rng, dim, floor=floor) for _ in range(count)]
        case StateEnsemble.NEAR_IDENTICAL:
            return near_identical_states(rng, count, dim, epsilon, floor)
    raise ValueError(f"unknown ensemble {ensemble}")


def random_channel(
    rng: np.random.Generator,
    a: int,
    dim: int,
    ensemble: StateEnsemble | str = StateEnsemble.HAAR_MIXED,
) -> tuple[Channel, Prior]:
    return Channel(tuple(random_states(rng, a, dim, ensemble))), random_prior(rng, a)


class TestEnsembles(unittest.TestCase):
    def test_positive_definite_ensembles(self):
        rng = np.random.default_rng(21)
        floor = get_settings().pd_floor
        for ensemble in ("haar-mixed", "diagonal", "near-identical"):
            for state in random_states(rng, 4, 5, ensemble):
                self.assertGreaterEqual(state.min_eigenvalue(), floor * 0.99)
                self.assertAlmostEqual(state.trace(), 1.0, delta=1e-12)

    def test_rank_deficient(self):
        rng = np.random.default_rng(22)
        for state in random_states(rng, 6, 4, StateEnsemble.RANK_DEFICIENT):
            self.assertFalse(state.is_invertible(1e-10))

    def test_diagonal_is_diagonal(self):
        channel, prior = random_channel(np.random.default_rng(23), 3, 4, "diagonal")
        self.assertTrue(channel.is_diagonal())
        self.assertEqual(prior.size, 3)

    def test_near_identical_are_close(self):
        states = near_identical_states(np.random.default_rng(24), 3, 3, epsilon=1e-4)
        self.assertLess(states[0].max_abs_difference(states[1]), 1e-3)

    def test_deterministic(self):
        a = random_states(np.random.default_rng(7), 2, 3)
        b = random_states(np.random.default_rng(7), 2, 3)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.data, y.data)
