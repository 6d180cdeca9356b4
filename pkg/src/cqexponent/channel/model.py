from __future__ import annotations

import io
import json
import unittest
from dataclasses import dataclass, field
from typing import IO, Sequence

import cattrs
import numpy as np
import numpy.typing as npt
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import entr

from ..common.errors import (
    ChannelFormatError,
    DimensionError,
    ExponentDomainError,
    NotHermitianError,
    NotPositiveSemidefiniteError,
    PriorError,
    TraceError,
)
from ..common.settings import get_settings
from ..common.strategies import channels, open_s_values, s_values
from ..linalg.spectral import HermitianMatrix, clipped_eigenvalues, random_unitary


class DensityMatrix(HermitianMatrix):
    """
    PSD Hermitian operator with unit trace.
    """

    def __post_init__(self):
        super().__post_init__()
        self.validate()

    def validate(self, index: int | None = None) -> None:
        limits = get_settings()
        if self.eigenvalues[0] < -limits.eigen_floor:
            raise NotPositiveSemidefiniteError(float(self.eigenvalues[0]), index)
        trace = self.trace()
        if abs(trace - 1) > limits.trace_tol:
            raise TraceError(trace, index)

    @classmethod
    def pure(cls, vector: npt.ArrayLike) -> DensityMatrix:
        v = np.asarray(vector, dtype=np.complex128)
        v = v / np.linalg.norm(v)
        return cls(np.outer(v, v.conj()))

    @classmethod
    def maximally_mixed(cls, dim: int) -> DensityMatrix:
        return cls(np.eye(dim) / dim)

    def __repr__(self) -> str:
        return f"DensityMatrix(dim={self.dim})"


def as_density(m: HermitianMatrix, index: int | None = None) -> DensityMatrix:
    if isinstance(m, DensityMatrix):
        return m
    try:
        return DensityMatrix(m.data)
    except (NotPositiveSemidefiniteError, TraceError) as e:
        if index is None:
            raise
        if isinstance(e, TraceError):
            raise TraceError(e.trace, index) from e
        raise NotPositiveSemidefiniteError(e.eigenvalue, index) from e


@dataclass(frozen=True)
class Prior:
    """
    Probability distribution over the input alphabet.
    """

    weights: tuple[float, ...]

    def __post_init__(self):
        w = tuple(float(x) for x in self.weights)
        object.__setattr__(self, "weights", w)
        if len(w) == 0:
            raise PriorError("prior is empty")
        if any(not np.isfinite(x) or x < 0 for x in w):
            raise PriorError(f"prior has a negative or non-finite weight: {w}")
        if abs(sum(w) - 1) > get_settings().prior_tol:
            raise PriorError(f"prior sums to {sum(w)!r}, not 1")

    @classmethod
    def uniform(cls, size: int) -> Prior:
        return cls(tuple([1.0 / size] * size))

    @classmethod
    def normalized(cls, weights: npt.ArrayLike) -> Prior:
        w = np.clip(np.asarray(weights, dtype=float), 0.0, None)
        total = float(np.sum(w))
        if total <= 0:
            raise PriorError("weights sum to zero")
        return cls(tuple((w / total).tolist()))

    @classmethod
    def vertex(cls, size: int, index: int) -> Prior:
        w = [0.0] * size
        w[index] = 1.0
        return cls(tuple(w))

    @property
    def size(self) -> int:
        return len(self.weights)

    def as_array(self) -> np.ndarray:
        return np.array(self.weights)

    def support(self) -> list[int]:
        return [i for i, w in enumerate(self.weights) if w > 0]


@dataclass(frozen=True, eq=False)
class Channel:
    """
    Classical-quantum channel i -> S_i.
    """

    states: tuple[DensityMatrix, ...]

    def __post_init__(self):
        states = tuple(as_density(s, i) for i, s in enumerate(self.states))
        object.__setattr__(self, "states", states)
        if len(states) == 0:
            raise DimensionError("a channel needs at least one input letter")
        dims = {s.dim for s in states}
        if len(dims) != 1:
            raise DimensionError(f"states have different dimensions: {sorted(dims)}")

    @property
    def alphabet_size(self) -> int:
        return len(self.states)

    @property
    def dim(self) -> int:
        return self.states[0].dim

    def check_prior(self, prior: Prior) -> None:
        if prior.size != self.alphabet_size:
            raise PriorError(
                f"prior has {prior.size} weights for {self.alphabet_size} input letters"
            )

    def conjugate_by(self, u: npt.ArrayLike) -> Channel:
        return Channel(tuple(DensityMatrix(s.conjugate_by(u).data) for s in self.states))

    def permuted(self, order: Sequence[int]) -> Channel:
        return Channel(tuple(self.states[i] for i in order))

    def is_diagonal(self, tol: float = 0.0) -> bool:
        for s in self.states:
            off = s.data - np.diag(np.diag(s.data))
            if np.max(np.abs(off)) > tol:
                return False
        return True

    def transition_matrix(self) -> np.ndarray:
        """
        Row-stochastic matrix p_i(j) of a channel with simultaneously diagonal states.
        """
        if not self.is_diagonal():
            raise DimensionError("states are not simultaneously diagonal")
        return np.array([np.diag(s.data).real for s in self.states])

    def __repr__(self) -> str:
        return f"Channel(a={self.alphabet_size}, d={self.dim})"


def orthogonal_pure_channel(a: int = 2) -> Channel:
    """
    Input letter i is sent to the basis projector |i><i| on C^a.
    """
    return Channel(tuple(DensityMatrix.pure(np.eye(a)[i]) for i in range(a)))


def binary_symmetric_channel(p: float) -> Channel:
    return Channel(
        (DensityMatrix(np.diag([1 - p, p])), DensityMatrix(np.diag([p, 1 - p])))
    )


def diagonal_channel(transition: npt.ArrayLike) -> Channel:
    t = np.asarray(transition, dtype=float)
    return Channel(tuple(DensityMatrix(np.diag(row)) for row in t))


def identical_states_channel(state: DensityMatrix, a: int = 2) -> Channel:
    return Channel(tuple([state] * a))


@dataclass
class MatrixDocument:
    re: list[list[float]]
    im: list[list[float]] | None = None


@dataclass
class ChannelDocument:
    """
    JSON channel file: ``{"dim", "states": [{"re", "im"}], "prior"}``.
    """

    dim: int
    states: list[MatrixDocument]
    prior: list[float] | None = None


@dataclass
class WitnessDocument(ChannelDocument):
    s: float = 0.0
    seed: int = 0
    inequality: str = ""
    extra: dict[str, float] = field(default_factory=dict)


converter = cattrs.Converter()
converter.register_unstructure_hook(
    MatrixDocument,
    lambda m: {"re": m.re, "im": m.im} if m.im is not None else {"re": m.re},
)


def matrix_from_document(doc: MatrixDocument, dim: int, index: int) -> np.ndarray:
    re = np.asarray(doc.re, dtype=float)
    im = np.zeros_like(re) if doc.im is None else np.asarray(doc.im, dtype=float)
    if re.shape != (dim, dim) or im.shape != (dim, dim):
        raise DimensionError(
            f"state {index}: expected {dim}x{dim}, got re {re.shape}, im {im.shape}"
        )
    return re + 1j * im


def matrix_to_document(m: np.ndarray) -> MatrixDocument:
    return MatrixDocument(re=m.real.tolist(), im=m.imag.tolist())


def channel_from_document(doc: ChannelDocument) -> tuple[Channel, Prior]:
    if doc.dim < 1:
        raise DimensionError(f"dim must be positive, got {doc.dim}")
    states = []
    for i, m in enumerate(doc.states):
        data = matrix_from_document(m, doc.dim, i)
        try:
            hermitian = HermitianMatrix.from_array(data)
        except NotHermitianError as e:
            raise ChannelFormatError(f"state {i}: {e}") from e
        states.append(as_density(hermitian, i))
    channel = Channel(tuple(states))
    prior = Prior.uniform(channel.alphabet_size) if doc.prior is None else Prior(tuple(doc.prior))
    channel.check_prior(prior)
    return channel, prior


def channel_to_document(channel: Channel, prior: Prior | None = None) -> ChannelDocument:
    return ChannelDocument(
        dim=channel.dim,
        states=[matrix_to_document(s.data) for s in channel.states],
        prior=None if prior is None else list(prior.weights),
    )


def parse_document(text: str, cls: type[ChannelDocument] = ChannelDocument) -> ChannelDocument:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ChannelFormatError(f"not valid JSON: {e}") from e
    try:
        return converter.structure(raw, cls)
    except (cattrs.BaseValidationError, KeyError, TypeError, ValueError) as e:
        raise ChannelFormatError(f"malformed channel document: {e}") from e


def loads_channel(text: str) -> tuple[Channel, Prior]:
    return channel_from_document(parse_document(text))


def load_channel(f: IO[str]) -> tuple[Channel, Prior]:
    """
    Load a channel and its prior (uniform when absent) from a JSON file.
    """
    return loads_channel(f.read())


def dumps_document(doc: ChannelDocument) -> str:
    raw = converter.unstructure(doc)
    if raw.get("prior") is None:
        raw.pop("prior", None)
    return json.dumps(raw)


def dumps_channel(channel: Channel, prior: Prior | None = None) -> str:
    return dumps_document(channel_to_document(channel, prior))


def save_channel(f: IO[str], channel: Channel | ChannelDocument, prior: Prior | None = None) -> None:
    """
    Write a channel, or a ready document such as a witness, as one line of JSON.
    """
    doc = channel if isinstance(channel, ChannelDocument) else channel_to_document(channel, prior)
    f.write(dumps_document(doc) + "\n")


def mixed_power_state(channel: Channel, prior: Prior, s: float) -> HermitianMatrix:
    """
    A(s) = sum_i pi_i S_i^{1/(1+s)}; zero-weight letters are dropped.
    """
    if not s > -1:
        raise ExponentDomainError(f"s must exceed -1, got {s!r}")
    channel.check_prior(prior)
    p = 1.0 / (1.0 + s)
    total = np.zeros((channel.dim, channel.dim), dtype=np.complex128)
    for i in prior.support():
        state = channel.states[i]
        term = state.data if p == 1.0 else state.power(p, support_only=True).data
        total += prior.weights[i] * term
    return HermitianMatrix(total)


def von_neumann_entropy(rho: HermitianMatrix) -> float:
    """
    S(rho) = -Tr rho log rho in nats.
    """
    return float(np.sum(entr(clipped_eigenvalues(rho))))


def holevo_quantity(channel: Channel, prior: Prior) -> float:
    channel.check_prior(prior)
    average = mixed_power_state(channel, prior, 0.0)
    conditional = sum(
        prior.weights[i] * von_neumann_entropy(channel.states[i]) for i in prior.support()
    )
    return von_neumann_entropy(average) - conditional


def binary_entropy(p: float) -> float:
    return float(entr(p) + entr(1 - p))


class TestDensityMatrix(unittest.TestCase):
    def test_rejects_bad_trace(self):
        with self.assertRaises(TraceError):
            DensityMatrix(np.diag([0.5, 0.4]))

    def test_rejects_negative(self):
        with self.assertRaises(NotPositiveSemidefiniteError):
            DensityMatrix(np.diag([1.2, -0.2]))

    def test_pure(self):
        rho = DensityMatrix.pure([1, 1j])
        self.assertAlmostEqual(rho.trace(), 1.0, delta=1e-15)
        self.assertAlmostEqual(von_neumann_entropy(rho), 0.0, delta=1e-12)


class TestPrior(unittest.TestCase):
    def test_validation(self):
        with self.assertRaises(PriorError):
            Prior((0.5, 0.6))
        with self.assertRaises(PriorError):
            Prior((1.5, -0.5))
        self.assertEqual(Prior((0.0, 1.0)).support(), [1])

    def test_normalized(self):
        self.assertEqual(Prior.normalized([2, 2]).weights, (0.5, 0.5))


SAMPLE_DOCUMENT = (
    '{"dim": 2, "states": [{"re": [[1, 0], [0, 0]]}, '
    '{"re": [[0.5, 0], [0, 0.5]], "im": [[0, 0], [0, 0]]}], "prior": [0.5, 0.5]}'
)


class TestChannelDocument(unittest.TestCase):
    def test_load(self):
        channel, prior = loads_channel(SAMPLE_DOCUMENT)
        self.assertEqual((channel.alphabet_size, channel.dim), (2, 2))
        self.assertEqual(prior.weights, (0.5, 0.5))

    def test_default_prior_is_uniform(self):
        channel, prior = loads_channel('{"dim": 1, "states": [{"re": [[1]]}, {"re": [[1]]}, {"re": [[1]]}]}')
        self.assertEqual(prior, Prior.uniform(3))
        self.assertEqual(channel.dim, 1)

    def test_trace_violation(self):
        with self.assertRaises(TraceError) as ctx:
            loads_channel('{"dim": 2, "states": [{"re": [[0.5, 0], [0, 0.4]]}]}')
        self.assertEqual(ctx.exception.index, 0)

    def test_psd_violation_names_state(self):
        doc = '{"dim": 2, "states": [{"re": [[1, 0], [0, 0]]}, {"re": [[1.1, 0], [0, -0.1]]}]}'
        with self.assertRaises(NotPositiveSemidefiniteError) as ctx:
            loads_channel(doc)
        self.assertEqual(ctx.exception.index, 1)
        self.assertAlmostEqual(ctx.exception.eigenvalue, -0.1, delta=1e-12)

    def test_dimension_mismatch(self):
        with self.assertRaises(DimensionError):
            loads_channel('{"dim": 2, "states": [{"re": [[1]]}]}')

    def test_malformed(self):
        for text in ("not json", '{"states": []}', '{"dim": 2, "states": [{"im": [[0]]}]}'):
            with self.assertRaises(ChannelFormatError):
                loads_channel(text)

    def test_round_trip(self):
        rng = np.random.default_rng(11)
        from .ensembles import haar_mixed_state

        channel = Channel(tuple(haar_mixed_state(rng, 3) for _ in range(3)))
        prior = Prior.normalized(rng.random(3))
        again, again_prior = loads_channel(dumps_channel(channel, prior))
        for a, b in zip(channel.states, again.states):
            self.assertLessEqual(a.max_abs_difference(b), 1e-15)
        self.assertEqual(prior, again_prior)
        self.assertEqual(dumps_channel(again, again_prior), dumps_channel(channel, prior))

    @settings(max_examples=30)
    @given(channels())
    def test_save_and_load(self, channel_and_prior):
        channel, prior = channel_and_prior
        f = io.StringIO()
        save_channel(f, channel, prior)
        self.assertTrue(f.getvalue().endswith("\n"))
        f.seek(0)
        again, again_prior = load_channel(f)
        for a, b in zip(channel.states, again.states, strict=True):
            self.assertLessEqual(a.max_abs_difference(b), 1e-15)
        self.assertEqual(prior, again_prior)


class TestFunctionals(unittest.TestCase):
    def test_mixed_power_state(self):
        channel = binary_symmetric_channel(0.2)
        prior = Prior((0.3, 0.7))
        a0 = mixed_power_state(channel, prior, 0.0)
        self.assertAlmostEqual(a0.trace(), 1.0, delta=1e-15)
        np.testing.assert_allclose(np.diag(a0.data).real, [0.38, 0.62], atol=1e-15)
        ortho = orthogonal_pure_channel(2)
        for s in (-0.5, 0.0, 0.3, 1.0):
            a = mixed_power_state(ortho, Prior.uniform(2), s)
            np.testing.assert_allclose(a.data, np.eye(2) / 2, atol=1e-14)
        single = Channel((DensityMatrix(np.diag([0.9, 0.1])),))
        a = mixed_power_state(single, Prior((1.0,)), 1.0)
        np.testing.assert_allclose(np.diag(a.data).real, np.sqrt([0.9, 0.1]), atol=1e-14)
        with self.assertRaises(ExponentDomainError):
            mixed_power_state(channel, prior, -1.0)

    @settings(max_examples=50)
    @given(channels(), st.one_of(s_values, open_s_values))
    def test_mixed_power_state_psd_on_random_channels(self, channel_and_prior, s):
        channel, prior = channel_and_prior
        a = mixed_power_state(channel, prior, s)
        self.assertGreaterEqual(a.min_eigenvalue(), -1e-12)
        self.assertGreater(a.trace(), 0.0)

    def test_entropy(self):
        self.assertAlmostEqual(von_neumann_entropy(DensityMatrix.maximally_mixed(2)), np.log(2), delta=1e-15)
        self.assertAlmostEqual(von_neumann_entropy(DensityMatrix(np.diag([0.9, 0.1]))), 0.325083, delta=1e-6)

    def test_holevo(self):
        rho = DensityMatrix(np.diag([0.6, 0.4]))
        self.assertAlmostEqual(holevo_quantity(identical_states_channel(rho, 3), Prior.uniform(3)), 0.0, delta=1e-12)
        self.assertAlmostEqual(holevo_quantity(orthogonal_pure_channel(2), Prior.uniform(2)), np.log(2), delta=1e-12)
        chi = holevo_quantity(binary_symmetric_channel(0.1), Prior.uniform(2))
        self.assertAlmostEqual(chi, np.log(2) - binary_entropy(0.1), delta=1e-12)
        self.assertAlmostEqual(chi, 0.368064, delta=1e-6)

    @settings(max_examples=40)
    @given(channels(), st.integers(0, 2**32 - 1))
    def test_holevo_unitary_and_permutation_invariance(self, channel_and_prior, seed):
        channel, prior = channel_and_prior
        chi = holevo_quantity(channel, prior)
        self.assertGreaterEqual(chi, -1e-10)
        u = random_unitary(np.random.default_rng(seed), channel.dim)
        self.assertAlmostEqual(holevo_quantity(channel.conjugate_by(u), prior), chi, delta=1e-9)
        order = list(reversed(range(channel.alphabet_size)))
        permuted = Prior(tuple(prior.weights[i] for i in order))
        self.assertAlmostEqual(holevo_quantity(channel.permuted(order), permuted), chi, delta=1e-12)

    def test_transition_matrix(self):
        t = binary_symmetric_channel(0.1).transition_matrix()
        np.testing.assert_allclose(t, [[0.9, 0.1], [0.1, 0.9]], atol=1e-15)
        with self.assertRaises(DimensionError):
            Channel((DensityMatrix.pure([1, 1]),)).transition_matrix()
