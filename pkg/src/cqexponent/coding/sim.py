"""
Finite-blocklength random coding over a classical-quantum channel with
square-root-measurement decoding.
"""

from __future__ import annotations

import math
import unittest
from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np
import numpy.typing as npt

from ..channel.model import (
    Channel,
    DensityMatrix,
    Prior,
    binary_symmetric_channel,
    diagonal_channel,
    orthogonal_pure_channel,
)
from ..common.errors import (
    ConfigError,
    DimensionCapError,
    DimensionError,
    IncompleteMeasurementError,
    NotPositiveSemidefiniteError,
    ProbabilityRangeError,
)
from ..common.seeding import instance_rng
from ..common.settings import get_settings
from ..common.utils import clamp, log, timed
from ..linalg.spectral import HermitianMatrix, apply_spectral_fn

CODEBOOK_STREAM = 2
PROBABILITY_TOL = 1e-10


@dataclass(frozen=True)
class Codebook:
    n: int
    M: int
    words: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        words = tuple(tuple(int(x) for x in w) for w in self.words)
        object.__setattr__(self, "words", words)
        if self.M < 1 or len(words) != self.M:
            raise DimensionError(f"codebook has {len(words)} words, expected M = {self.M} >= 1")
        if any(len(w) != self.n for w in words):
            raise DimensionError(f"every word must have length n = {self.n}")

    def check_alphabet(self, size: int) -> None:
        if any(x < 0 or x >= size for w in self.words for x in w):
            raise DimensionError(f"codebook uses symbols outside 0..{size - 1}")

    @classmethod
    def random(cls, rng: np.random.Generator, prior: Prior, n: int, M: int) -> Codebook:
        """
        M words with symbols drawn i.i.d. from ``prior``.
        """
        symbols = rng.choice(prior.size, size=(M, n), p=prior.as_array())
        return cls(n, M, tuple(map(tuple, symbols.tolist())))


@dataclass(frozen=True)
class POVM:
    """
    Decoding measurement {X_j}; ``support`` is the projector the elements sum to.
    """

    elements: tuple[HermitianMatrix, ...]
    support: HermitianMatrix

    @property
    def min_eigenvalue(self) -> float:
        return min(x.min_eigenvalue() for x in self.elements)

    @property
    def completeness_residual(self) -> float:
        total = sum(x.data for x in self.elements)
        return self.support.max_abs_difference(total)

    def validate(self) -> None:
        if self.min_eigenvalue < -1e-10:
            raise NotPositiveSemidefiniteError(self.min_eigenvalue)
        if self.completeness_residual > 1e-8:
            raise IncompleteMeasurementError(self.completeness_residual)


@dataclass(frozen=True)
class ErrorProfile:
    per_word: tuple[float, ...]

    @property
    def average(self) -> float:
        return float(np.mean(self.per_word))

    @property
    def max(self) -> float:
        return max(self.per_word)


def codeword_state(channel: Channel, word: Sequence[int]) -> DensityMatrix:
    """
    S_w = S_{w_1} (x) ... (x) S_{w_n}.
    """
    cap = get_settings().dimension_cap
    dim = channel.dim ** len(word)
    if dim > cap:
        raise DimensionCapError(dim, cap)
    if any(x < 0 or x >= channel.alphabet_size for x in word):
        raise DimensionError(f"word {tuple(word)} uses symbols outside the channel alphabet")
    if len(word) == 1:
        return channel.states[word[0]]
    return DensityMatrix(reduce(np.kron, (channel.states[x].data for x in word)))


def _clip_negative(x: np.ndarray) -> np.ndarray:
    return apply_spectral_fn(HermitianMatrix(x), lambda w: np.clip(w, 0.0, None)).data


def square_root_measurement(states: Sequence[HermitianMatrix]) -> POVM:
    """
    X_j = T^{-1/2} S_j T^{-1/2} with T = sum_k S_k, inverse taken on the support of T.

    The support is spanned by the eigenvectors of T above
    ``max(srm_rcond, dim * eps) * lambda_max``. The first pass carries an error
    of order eps * lambda_max / lambda_min; roundoff negatives of each element
    are clipped and one congruence by Z^{-1/2}, Z = sum_j X_j on the support,
    brings the sum back to the projector.
    """
    if not states:
        raise DimensionError("square-root measurement needs at least one state")
    total = HermitianMatrix(sum(s.data for s in states))
    lam, vec = total.eigenvalues, total.spectrum.eigenvectors
    top = float(lam[-1])
    if not top > 0:
        raise NotPositiveSemidefiniteError(top)
    rcond = max(get_settings().srm_rcond, total.dim * np.finfo(float).eps)
    keep = lam > rcond * top
    basis = vec[:, keep]
    scale = lam[keep] ** -0.5
    first = [
        _clip_negative(scale[:, None] * (basis.conj().T @ s.data @ basis) * scale[None, :])
        for s in states
    ]
    refine = HermitianMatrix(sum(first)).power(-0.5).data
    dropped = int(np.count_nonzero(~keep))
    if dropped:
        log(f"  square-root measurement: {dropped} of {total.dim} directions below {rcond:.1e} * lambda_max")
    elements = tuple(HermitianMatrix(basis @ (refine @ x @ refine) @ basis.conj().T) for x in first)
    povm = POVM(elements, HermitianMatrix(basis @ basis.conj().T))
    povm.validate()
    return povm


def error_profile(states: Sequence[HermitianMatrix], povm: POVM) -> ErrorProfile:
    """
    P_j = 1 - Tr S_j X_j for every codeword.

    Values within 1e-10 of [0, 1] are roundoff and land on the boundary; anything
    further out means the measurement is not a POVM for these states.
    """
    if len(states) != len(povm.elements):
        raise DimensionError(f"{len(states)} states for {len(povm.elements)} POVM elements")
    errors = []
    for j, (s, x) in enumerate(zip(states, povm.elements)):
        if s.dim != x.dim:
            raise DimensionError(f"state of dimension {s.dim} against POVM element of dimension {x.dim}")
        p = 1.0 - float(np.einsum("ij,ji->", s.data, x.data).real)
        if not -PROBABILITY_TOL <= p <= 1.0 + PROBABILITY_TOL:
            raise ProbabilityRangeError(j, p)
        errors.append(clamp(p, 0.0, 1.0))
    return ErrorProfile(tuple(errors))


def codeword_distribution(transition: npt.ArrayLike, word: Sequence[int]) -> np.ndarray:
    t = np.asarray(transition, dtype=float)
    return reduce(np.kron, (t[x] for x in word))


def srm_error_scalar(distributions: npt.ArrayLike) -> ErrorProfile:
    """
    Square-root-measurement errors for commuting codewords given as output
    distributions: P_j = 1 - sum_x p_j(x)^2 / sum_k p_k(x).
    """
    p = np.asarray(distributions, dtype=float)
    total = p.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(total > 0, p**2 / np.where(total > 0, total, 1.0), 0.0)
    return ErrorProfile(tuple((1.0 - ratio.sum(axis=1)).tolist()))


@dataclass(frozen=True)
class TrialSummary:
    n: int
    M: int
    trials: int
    mean_avg_err: float
    mean_max_err: float

    @property
    def rate(self) -> float:
        return math.log(self.M) / self.n

    @property
    def exponent_proxy(self) -> float:
        """
        -ln(mean P_bar) / n; infinite when no trial erred.
        """
        if self.mean_avg_err <= 0:
            return math.inf
        return -math.log(self.mean_avg_err) / self.n


def decode_codebook(channel: Channel, codebook: Codebook) -> ErrorProfile:
    codebook.check_alphabet(channel.alphabet_size)
    cache: dict[tuple[int, ...], DensityMatrix] = {}
    states = []
    for w in codebook.words:
        if w not in cache:
            cache[w] = codeword_state(channel, w)
        states.append(cache[w])
    return error_profile(states, square_root_measurement(states))


def random_code_trial(
    channel: Channel, prior: Prior, n: int, M: int, trials: int, seed: int = 0
) -> TrialSummary:
    """
    Mean SRM error over ``trials`` random codebooks; trial t uses its own seeded generator.
    """
    channel.check_prior(prior)
    if trials < 1:
        raise ConfigError("trials must be at least 1")
    if n < 1 or M < 1:
        raise DimensionError("block length and codebook size must be positive")
    cap = get_settings().dimension_cap
    if channel.dim**n > cap:
        raise DimensionCapError(channel.dim**n, cap)
    averages, maxima = [], []
    with timed(f"{trials} trials at n = {n}, M = {M}"):
        for t in range(trials):
            codebook = Codebook.random(instance_rng(seed, t, stream=CODEBOOK_STREAM), prior, n, M)
            profile = decode_codebook(channel, codebook)
            averages.append(profile.average)
            maxima.append(profile.max)
    summary = TrialSummary(n, M, trials, float(np.mean(averages)), float(np.mean(maxima)))
    log(f"  mean average error {summary.mean_avg_err!r}")
    return summary


class TestCodewordState(unittest.TestCase):
    def test_single_letter(self):
        ch = binary_symmetric_channel(0.2)
        self.assertIs(codeword_state(ch, (1,)), ch.states[1])

    def test_diagonal_product(self):
        t = np.array([[0.7, 0.3], [0.4, 0.6]])
        state = codeword_state(diagonal_channel(t), (0, 0))
        np.testing.assert_allclose(np.diag(state.data).real, np.kron(t[0], t[0]), atol=1e-15)
        self.assertAlmostEqual(state.trace(), 1.0, delta=1e-9)

    def test_dimension_cap(self):
        with self.assertRaises(DimensionCapError):
            codeword_state(binary_symmetric_channel(0.1), (0,) * 15)


class TestSquareRootMeasurement(unittest.TestCase):
    def test_orthogonal_states(self):
        ch = orthogonal_pure_channel(2)
        povm = square_root_measurement(ch.states)
        np.testing.assert_allclose(povm.elements[0].data, ch.states[0].data, atol=1e-12)
        np.testing.assert_allclose(povm.elements[1].data, ch.states[1].data, atol=1e-12)
        profile = error_profile(ch.states, povm)
        self.assertLessEqual(profile.max, 1e-12)

    def test_identical_states(self):
        state = DensityMatrix(np.array([[0.6, 0.2], [0.2, 0.4]]))
        povm = square_root_measurement([state, state])
        np.testing.assert_allclose(povm.elements[0].data, 0.5 * np.eye(2), atol=1e-12)
        self.assertAlmostEqual(error_profile([state, state], povm).average, 0.5, delta=1e-12)

    def test_single_word(self):
        state = DensityMatrix.pure([1.0, 1.0j])
        povm = square_root_measurement([state])
        np.testing.assert_allclose(povm.elements[0].data, state.data, atol=1e-12)
        self.assertLessEqual(error_profile([state], povm).average, 1e-12)

    def test_validity_on_random_instances(self):
        from ..channel.ensembles import random_channel

        rng = np.random.default_rng(81)
        for _ in range(200):
            ch, prior = random_channel(rng, 3, 2, "rank-deficient" if rng.random() < 0.3 else "haar-mixed")
            codebook = Codebook.random(rng, prior, 2, 3)
            states = [codeword_state(ch, w) for w in codebook.words]
            povm = square_root_measurement(states)
            self.assertGreaterEqual(povm.min_eigenvalue, -1e-10)
            self.assertLessEqual(povm.completeness_residual, 1e-8)
            for p in error_profile(states, povm).per_word:
                self.assertTrue(0.0 <= p <= 1.0)

    def test_near_singular_rotated_states(self):
        # eigenvalues (1 - 1e-5, 1e-5) push the smallest eigenvalues of T toward 1e-15 at n = 3
        c, s = math.cos(0.7), math.sin(0.7)
        u = np.array([[c, -s], [s, c]])
        base = np.diag([1 - 1e-5, 1e-5])
        ch = Channel((DensityMatrix(base), DensityMatrix(u @ base @ u.T)))
        rng = np.random.default_rng(84)
        for _ in range(20):
            codebook = Codebook.random(rng, Prior.uniform(2), 3, 4)
            states = [codeword_state(ch, w) for w in codebook.words]
            povm = square_root_measurement(states)
            self.assertGreaterEqual(povm.min_eigenvalue, -1e-10)
            self.assertLessEqual(povm.completeness_residual, 1e-8)
            for p in error_profile(states, povm).per_word:
                self.assertTrue(0.0 <= p <= 1.0)
        summary = random_code_trial(ch, Prior.uniform(2), 3, 4, 20, seed=3)
        self.assertTrue(0.0 <= summary.mean_avg_err <= 1.0)

    def test_invalid_measurements_are_reported(self):
        half = HermitianMatrix.identity(2) * 0.5
        with self.assertRaises(IncompleteMeasurementError):
            POVM((half,), HermitianMatrix.identity(2)).validate()
        state = DensityMatrix.maximally_mixed(2)
        with self.assertRaises(ProbabilityRangeError):
            error_profile([state], POVM((HermitianMatrix.identity(2) * -1.0,), HermitianMatrix.identity(2)))

    def test_scalar_oracle(self):
        rng = np.random.default_rng(82)
        for _ in range(30):
            t = rng.dirichlet(np.ones(3), size=2)
            ch = diagonal_channel(t)
            codebook = Codebook.random(rng, Prior.uniform(2), 2, 4)
            matrix = decode_codebook(ch, codebook)
            scalar = srm_error_scalar([codeword_distribution(t, w) for w in codebook.words])
            np.testing.assert_allclose(matrix.per_word, scalar.per_word, atol=1e-10)

    def test_permutation_equivariance(self):
        from ..channel.ensembles import random_channel

        rng = np.random.default_rng(83)
        ch, prior = random_channel(rng, 2, 2)
        codebook = Codebook.random(rng, prior, 2, 4)
        states = [codeword_state(ch, w) for w in codebook.words]
        order = [2, 0, 3, 1]
        base = error_profile(states, square_root_measurement(states)).per_word
        shuffled = [states[i] for i in order]
        permuted = error_profile(shuffled, square_root_measurement(shuffled)).per_word
        np.testing.assert_allclose(permuted, [base[i] for i in order], atol=1e-12)


class TestRandomCodeTrial(unittest.TestCase):
    def test_orthogonal_two_words(self):
        ch = orthogonal_pure_channel(2)
        # the four equally likely codebooks: two collide with P_bar = 1/2, two decode perfectly
        exact = np.mean([
            decode_codebook(ch, Codebook(1, 2, ((a,), (b,)))).average for a in (0, 1) for b in (0, 1)
        ])
        self.assertAlmostEqual(exact, 0.25, delta=1e-12)
        summary = random_code_trial(ch, Prior.uniform(2), 1, 2, 2000, seed=5)
        self.assertAlmostEqual(summary.mean_avg_err, 0.25, delta=0.04)

    def test_single_word(self):
        summary = random_code_trial(binary_symmetric_channel(0.1), Prior.uniform(2), 3, 1, 10)
        self.assertLessEqual(summary.mean_avg_err, 1e-12)
        self.assertEqual(summary.rate, 0.0)

    def test_deterministic(self):
        ch = binary_symmetric_channel(0.1)
        a = random_code_trial(ch, Prior.uniform(2), 4, 4, 20, seed=9)
        b = random_code_trial(ch, Prior.uniform(2), 4, 4, 20, seed=9)
        self.assertEqual(a, b)
        self.assertAlmostEqual(a.rate, math.log(4) / 4)

    def test_bsc_error_does_not_grow_with_block_length(self):
        # M = 2^(n/2): half a bit per use, where mostly codeword collisions err
        ch = binary_symmetric_channel(0.001)
        means = [random_code_trial(ch, Prior.uniform(2), n, 2 ** (n // 2), 1000, seed=0).mean_avg_err
                 for n in (2, 4, 6)]
        for earlier, later in zip(means, means[1:]):
            self.assertLessEqual(later, earlier + 0.01)
