"""
The concavity trace inequality and the steps of its proof.

With A_i = S_i^{1/(1+s)}, M = sum_k pi_k A_k, P = sum_i pi_i A_i (log A_i)^2 and
Y = sum_i pi_i A_i log A_i, the inequality reads

    Tr[M^s P] >= Tr[M^{s-1} Y^2]        (s >= 0)

and is proved by chaining

    sum_i C_i^H X_i^2 C_i >= (sum_i C_i^H X_i C_i)^2          (operator Jensen)
    Tr[M^s P] >= Tr[M^s Y M^{-1} Y]                             (intermediate)
    Tr[M^s Y M^{-1} Y] >= Tr[M^{s-1} Y^2]                      ((x^s, x^-1) antimonotone)

with C_i = (pi_i A_i)^{1/2} M^{-1/2} and X_i = log A_i.
"""

from __future__ import annotations

import unittest
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import numpy.typing as npt
from hypothesis import given, settings

from ..channel.model import (
    Channel,
    DensityMatrix,
    Prior,
    WitnessDocument,
    channel_from_document,
    converter,
    mixed_power_state,
)
from ..common.errors import (
    CQExponentError,
    ExponentDomainError,
    FormulationMismatchError,
    PartitionOfIdentityError,
    PriorError,
    SingularOperatorError,
)
from ..common.settings import get_settings
from ..common.strategies import channels, s_values
from ..linalg.spectral import (
    HermitianMatrix,
    apply_spectral_fn,
    clipped_eigenvalues,
    matrix_entropy,
    x_log2_x,
    x_log_x,
)
from .pairs import PairKind, antimonotone_power_pair, trace_pair_gap
from .report import InequalityReport, witness_document


def _trace_product(*factors: np.ndarray) -> complex:
    out = factors[0]
    for f in factors[1:-1]:
        out = out @ f
    return complex(np.einsum("ij,ji->", out, factors[-1]))


def _check_s(s: float, explore: bool) -> float:
    s = float(s)
    if not s > -1.0:
        raise ExponentDomainError(f"s must exceed -1, got {s!r}")
    if s < 0 and not explore:
        raise ExponentDomainError(
            f"s = {s!r} is negative; the inequality is only asserted for s >= 0 "
            "(use exploration mode)"
        )
    return s


@dataclass
class WeightedOperators:
    """
    The (pi_i, A_i) of one instance with zero weights removed, plus M, P and Y.
    """

    weights: list[float]
    operators: list[HermitianMatrix]

    def __post_init__(self):
        if len(self.weights) != len(self.operators):
            raise PriorError("weights and operators differ in length")
        for i, a in enumerate(self.operators):
            clipped_eigenvalues(a, i)
        self.dim = self.operators[0].dim
        self.mean = HermitianMatrix(sum(w * a.data for w, a in zip(self.weights, self.operators)))
        self.log_square = HermitianMatrix(
            sum(w * apply_spectral_fn(a, x_log2_x).data for w, a in zip(self.weights, self.operators))
        )
        self.log_mean = HermitianMatrix(
            sum(w * apply_spectral_fn(a, x_log_x).data for w, a in zip(self.weights, self.operators))
        )

    @classmethod
    def from_prior(cls, operators: Sequence[HermitianMatrix], prior: Prior) -> WeightedOperators:
        if prior.size != len(operators):
            raise PriorError(f"prior has {prior.size} weights for {len(operators)} operators")
        support = prior.support()
        return cls([prior.weights[i] for i in support], [operators[i] for i in support])

    def mean_power(self, p: float, support_only: bool) -> np.ndarray:
        return self.mean.power(p, support_only=support_only).data

    def require_invertible_mean(self, support_only: bool) -> bool:
        """
        True when M is singular and support-restricted calculus is in use.
        """
        if self.mean.is_invertible():
            return False
        if not support_only:
            raise SingularOperatorError(float(np.min(np.abs(self.mean.eigenvalues))))
        return True


def signal_powers(channel: Channel, s: float) -> list[HermitianMatrix]:
    """
    A_i = S_i^{1/(1+s)}, evaluated on the support of each state.
    """
    p = 1.0 / (1.0 + s)
    return [st.power(p, support_only=True) for st in channel.states]


def concavity_trace_gap(
    operators: Sequence[HermitianMatrix],
    prior: Prior,
    s: float,
    support_only: bool = False,
    explore: bool = False,
) -> InequalityReport:
    """
    Tr[M^s P] - Tr[M^{s-1} Y^2] for PSD operators A_i.
    """
    s = _check_s(s, explore)
    w = WeightedOperators.from_prior(operators, prior)
    restricted = w.require_invertible_mean(support_only)
    y = w.log_mean.data
    lhs = _trace_product(w.mean_power(s, restricted), w.log_square.data)
    rhs = _trace_product(w.mean_power(s - 1, restricted), y, y)
    return InequalityReport(
        inequality_id="theorem",
        lhs=lhs.real,
        rhs=rhs.real,
        imag_residue=max(abs(lhs.imag), abs(rhs.imag)),
        support_restricted=restricted,
        exploratory=s < 0,
    )


def eq3_trace_gap(
    channel: Channel, prior: Prior, s: float, support_only: bool = False, explore: bool = False
) -> InequalityReport:
    """
    The inequality written with density matrices S_i and the matrix entropy H.

    Cross-checked against :func:`concavity_trace_gap` before it is returned.
    """
    s = _check_s(s, explore)
    channel.check_prior(prior)
    powers = signal_powers(channel, s)
    a_s = mixed_power_state(channel, prior, s)
    restricted = not a_s.is_invertible()
    if restricted and not support_only:
        raise SingularOperatorError(float(np.min(np.abs(a_s.eigenvalues))))
    support = prior.support()
    log_square = sum(prior.weights[j] * apply_spectral_fn(powers[j], x_log2_x).data for j in support)
    entropy = sum(prior.weights[j] * matrix_entropy(powers[j]).data for j in support)
    lhs = _trace_product(a_s.power(s, support_only=restricted).data, log_square)
    rhs = _trace_product(a_s.power(s - 1, support_only=restricted).data, entropy, entropy)
    report = InequalityReport(
        inequality_id="eq3",
        lhs=lhs.real,
        rhs=rhs.real,
        imag_residue=max(abs(lhs.imag), abs(rhs.imag)),
        support_restricted=restricted,
        exploratory=s < 0,
    )
    other = concavity_trace_gap(powers, prior, s, support_only=support_only, explore=explore)
    difference = abs(report.gap - other.gap)
    if difference > get_settings().formulation_tol * max(report.scale, other.scale):
        raise FormulationMismatchError(difference)
    return report


def two_state_trace_gap(
    a: HermitianMatrix, b: HermitianMatrix, s: float, explore: bool = False
) -> InequalityReport:
    """
    Tr[(A+B)^s (A(log A)^2 + B(log B)^2) - (A+B)^{s-1} (A log A + B log B)^2], s >= 0.

    Equals 2^{s+1} times the general gap with pi = (1/2, 1/2).
    """
    s = _check_s(s, explore)
    total = a + b
    log_square = apply_spectral_fn(a, x_log2_x).data + apply_spectral_fn(b, x_log2_x).data
    y = apply_spectral_fn(a, x_log_x).data + apply_spectral_fn(b, x_log_x).data
    lhs = _trace_product(total.power(s).data, log_square)
    rhs = _trace_product(total.power(s - 1).data, y, y)
    return InequalityReport(
        inequality_id="two-state",
        lhs=lhs.real,
        rhs=rhs.real,
        imag_residue=max(abs(lhs.imag), abs(rhs.imag)),
        exploratory=s < 0,
    )


def concavity_trace_gap_scalar(diagonals: npt.ArrayLike, prior: Prior, s: float) -> InequalityReport:
    """
    The inequality for commuting (diagonal) A_i, with scalar arithmetic only.
    """
    a = np.asarray(diagonals, dtype=float)
    w = prior.as_array()
    keep = w > 0
    a, w = a[keep], w[keep]
    m = w @ a
    log_square = w @ x_log2_x(a)
    y = w @ x_log_x(a)
    lhs = float(np.sum(np.power(m, s) * log_square))
    rhs = float(np.sum(np.power(m, s - 1) * y * y))
    return InequalityReport(inequality_id="theorem-scalar", lhs=lhs, rhs=rhs)


def jensen_gap(
    c_list: Sequence[npt.ArrayLike], x_list: Sequence[HermitianMatrix]
) -> HermitianMatrix:
    """
    sum_i C_i^H X_i^2 C_i - (sum_i C_i^H X_i C_i)^2, for sum_i C_i^H C_i = I.
    """
    cs = [np.asarray(c, dtype=np.complex128) for c in c_list]
    if len(cs) != len(x_list) or not cs:
        raise PartitionOfIdentityError(float("inf"))
    dim = cs[0].shape[0]
    residual = float(np.max(np.abs(sum(c.conj().T @ c for c in cs) - np.eye(dim))))
    if residual > 1e-8:
        raise PartitionOfIdentityError(residual)
    first = sum(c.conj().T @ x.data @ x.data @ c for c, x in zip(cs, x_list))
    inner = sum(c.conj().T @ x.data @ c for c, x in zip(cs, x_list))
    return HermitianMatrix(first - inner @ inner)


def jensen_instance(
    operators: Sequence[HermitianMatrix], prior: Prior
) -> tuple[list[np.ndarray], list[HermitianMatrix]]:
    """
    C_i = (pi_i A_i)^{1/2} M^{-1/2} and X_i = log A_i; needs positive definite A_i.
    """
    w = WeightedOperators.from_prior(operators, prior)
    w.require_invertible_mean(support_only=False)
    m_inv_half = w.mean_power(-0.5, support_only=False)
    cs = [(wi * a).power(0.5).data @ m_inv_half for wi, a in zip(w.weights, w.operators)]
    xs = [a.log() for a in w.operators]
    return cs, xs


def jensen_report(operators: Sequence[HermitianMatrix], prior: Prior) -> InequalityReport:
    """
    Smallest eigenvalue of the Jensen operator gap, reported against 0.
    """
    cs, xs = jensen_instance(operators, prior)
    gap = jensen_gap(cs, xs)
    first = sum(c.conj().T @ x.data @ x.data @ c for c, x in zip(cs, xs))
    return InequalityReport(
        inequality_id="jensen",
        lhs=gap.min_eigenvalue(),
        rhs=0.0,
        scale=1.0 + float(np.max(np.abs(first))),
    )


def intermediate_trace_gap(
    operators: Sequence[HermitianMatrix], prior: Prior, s: float, explore: bool = False
) -> InequalityReport:
    """
    Tr[M^s P] - Tr[M^s Y M^{-1} Y].
    """
    s = _check_s(s, explore)
    w = WeightedOperators.from_prior(operators, prior)
    w.require_invertible_mean(support_only=False)
    y = w.log_mean.data
    m_s = w.mean_power(s, support_only=False)
    lhs = _trace_product(m_s, w.log_square.data)
    rhs = _trace_product(m_s, y, w.mean_power(-1.0, support_only=False), y)
    return InequalityReport(
        inequality_id="intermediate",
        lhs=lhs.real,
        rhs=rhs.real,
        imag_residue=max(abs(lhs.imag), abs(rhs.imag)),
        exploratory=s < 0,
    )


def final_step_gap(
    operators: Sequence[HermitianMatrix], prior: Prior, s: float, explore: bool = False
) -> InequalityReport:
    """
    Tr[M^s Y M^{-1} Y] - Tr[M^{s-1} Y^2], the antimonotone-pair step with (x^s, x^-1).
    """
    s = _check_s(s, explore)
    w = WeightedOperators.from_prior(operators, prior)
    w.require_invertible_mean(support_only=False)
    report = trace_pair_gap(antimonotone_power_pair(s), w.mean, w.log_mean, kind=PairKind.ANTIMONOTONE)
    report.inequality_id = "final-step"
    report.exploratory = s < 0
    report.witness = {}
    return report


def _theorem(channel, prior, s, support_only, explore):
    return concavity_trace_gap(signal_powers(channel, s), prior, s, support_only, explore)


def _eq3(channel, prior, s, support_only, explore):
    return eq3_trace_gap(channel, prior, s, support_only, explore)


def _jensen(channel, prior, s, support_only, explore):
    _check_s(s, explore)
    report = jensen_report(signal_powers(channel, s), prior)
    report.exploratory = s < 0
    return report


def _intermediate(channel, prior, s, support_only, explore):
    return intermediate_trace_gap(signal_powers(channel, s), prior, s, explore)


def _final_step(channel, prior, s, support_only, explore):
    return final_step_gap(signal_powers(channel, s), prior, s, explore)


def _two_state(channel, prior, s, support_only, explore):
    if channel.alphabet_size != 2:
        raise PriorError("the two-state inequality needs exactly two input letters")
    a, b = signal_powers(channel, s)
    return two_state_trace_gap(a, b, s, explore)


Evaluator = Callable[[Channel, Prior, float, bool, bool], InequalityReport]

INEQUALITIES: dict[str, Evaluator] = {
    "theorem": _theorem,
    "eq3": _eq3,
    "jensen": _jensen,
    "intermediate": _intermediate,
    "final-step": _final_step,
    "two-state": _two_state,
}

SUPPORT_RESTRICTED = frozenset({"theorem", "eq3"})


class UnknownInequalityError(CQExponentError):
    pass


def evaluate_instance(
    inequality_id: str,
    channel: Channel,
    prior: Prior,
    s: float,
    seed: int = 0,
    support_only: bool = False,
    explore: bool = False,
) -> InequalityReport:
    """
    Evaluate a named inequality on the states of a channel and attach a replayable witness.
    """
    if inequality_id not in INEQUALITIES:
        raise UnknownInequalityError(
            f"unknown inequality {inequality_id!r}; choose from {sorted(INEQUALITIES)}"
        )
    report = INEQUALITIES[inequality_id](channel, prior, s, support_only, explore)
    doc = witness_document(
        inequality_id, channel, prior, s, seed,
        support_only=float(support_only), explore=float(explore), gap=report.gap,
    )
    report.witness = converter.unstructure(doc)
    return report


def replay_witness(doc: WitnessDocument) -> InequalityReport:
    channel, prior = channel_from_document(doc)
    return evaluate_instance(
        doc.inequality,
        channel,
        prior,
        doc.s,
        seed=doc.seed,
        support_only=bool(doc.extra.get("support_only", 0.0)),
        explore=bool(doc.extra.get("explore", 0.0)),
    )


def _random_pd(rng: np.random.Generator, dim: int) -> HermitianMatrix:
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    m = g @ g.conj().T
    return HermitianMatrix(m / np.trace(m).real + 1e-3 * np.eye(dim))


class TestConcavityTraceGap(unittest.TestCase):
    def test_single_operator_is_equality(self):
        a = _random_pd(np.random.default_rng(51), 3)
        report = concavity_trace_gap([a], Prior((1.0,)), 0.6)
        self.assertLessEqual(abs(report.gap), 1e-10 * report.scale)

    def test_identical_operators_are_equality(self):
        a = _random_pd(np.random.default_rng(52), 4)
        report = concavity_trace_gap([a, a, a], Prior((0.2, 0.3, 0.5)), 0.4)
        self.assertLessEqual(abs(report.gap), 1e-10 * report.scale)

    def test_random_two_state(self):
        rng = np.random.default_rng(53)
        for _ in range(50):
            a, b = _random_pd(rng, 3), _random_pd(rng, 3)
            report = concavity_trace_gap([a, b], Prior.uniform(2), 0.5)
            self.assertTrue(report.holds(1e-9), report.gap)
            self.assertLessEqual(report.imag_residue, 1e-10 * report.scale)

    @settings(max_examples=80)
    @given(channels(max_letters=4, max_dim=4), s_values)
    def test_random_many_states(self, channel_and_prior, s):
        channel, prior = channel_and_prior
        report = concavity_trace_gap(signal_powers(channel, s), prior, s)
        self.assertTrue(report.holds(1e-9), (report.gap, report.scale))

    def test_negative_s_needs_exploration(self):
        a = _random_pd(np.random.default_rng(55), 2)
        with self.assertRaises(ExponentDomainError):
            concavity_trace_gap([a, a], Prior.uniform(2), -0.5)
        report = concavity_trace_gap([a, a], Prior.uniform(2), -0.5, explore=True)
        self.assertTrue(report.exploratory)

    def test_singular_mean(self):
        p = HermitianMatrix.diagonal([1.0, 0.0])
        q = HermitianMatrix.diagonal([0.5, 0.0])
        with self.assertRaises(SingularOperatorError):
            concavity_trace_gap([p, q], Prior.uniform(2), 0.5)
        report = concavity_trace_gap([p, q], Prior.uniform(2), 0.5, support_only=True)
        self.assertTrue(report.support_restricted)
        self.assertTrue(report.holds())

    def test_scalar_oracle_on_diagonals(self):
        rng = np.random.default_rng(56)
        for _ in range(30):
            diagonals = rng.dirichlet(np.ones(4), size=2) + 1e-3
            prior = Prior.normalized(rng.random(2))
            s = float(rng.random())
            ops = [HermitianMatrix.diagonal(d) for d in diagonals]
            matrix = concavity_trace_gap(ops, prior, s)
            scalar = concavity_trace_gap_scalar(diagonals, prior, s)
            self.assertLessEqual(abs(matrix.gap - scalar.gap), 1e-10)


class TestEq3(unittest.TestCase):
    @settings(max_examples=40)
    @given(channels(max_letters=4, max_dim=4), s_values)
    def test_formulations_agree(self, channel_and_prior, s):
        channel, prior = channel_and_prior
        eq3 = eq3_trace_gap(channel, prior, s)
        theorem = concavity_trace_gap(signal_powers(channel, s), prior, s)
        self.assertLessEqual(abs(eq3.gap - theorem.gap), 1e-10 * eq3.scale)
        self.assertTrue(eq3.holds())

    def test_rank_deficient_support_restricted(self):
        from ..channel.ensembles import random_channel

        channel, prior = random_channel(np.random.default_rng(58), 2, 4, "rank-deficient")
        report = eq3_trace_gap(channel, prior, 0.5, support_only=True)
        self.assertTrue(report.holds())


class TestTwoState(unittest.TestCase):
    def test_matches_general_form(self):
        rng = np.random.default_rng(59)
        for _ in range(20):
            a, b = _random_pd(rng, 3), _random_pd(rng, 3)
            s = float(rng.random())
            two = two_state_trace_gap(a, b, s)
            general = concavity_trace_gap([a, b], Prior.uniform(2), s)
            self.assertAlmostEqual(two.gap, 2 ** (s + 1) * general.gap, delta=1e-9 * two.scale)
            self.assertTrue(two.holds())


class TestProofChain(unittest.TestCase):
    def test_jensen_equality_cases(self):
        x = HermitianMatrix(np.array([[1.0, 2.0], [2.0, -1.0]]))
        gap = jensen_gap([np.eye(2)], [x])
        np.testing.assert_allclose(gap.data, np.zeros((2, 2)), atol=1e-14)
        c = np.sqrt(0.5) * np.eye(2)
        x = HermitianMatrix.diagonal([0.3, -2.0])
        gap = jensen_gap([c, c], [x, x])
        self.assertGreaterEqual(gap.min_eigenvalue(), -1e-12)

    def test_jensen_rejects_non_partition(self):
        with self.assertRaises(PartitionOfIdentityError) as ctx:
            jensen_gap([np.eye(2), np.eye(2)], [HermitianMatrix.identity(2)] * 2)
        self.assertAlmostEqual(ctx.exception.residual, 1.0)

    @settings(max_examples=50)
    @given(channels(max_letters=4, max_dim=4), s_values)
    def test_chain_on_random_instances(self, channel_and_prior, s):
        channel, prior = channel_and_prior
        ops = signal_powers(channel, s)
        cs, _ = jensen_instance(ops, prior)
        residual = np.max(np.abs(sum(c.conj().T @ c for c in cs) - np.eye(channel.dim)))
        self.assertLessEqual(residual, 1e-8)
        jensen = jensen_report(ops, prior)
        middle = intermediate_trace_gap(ops, prior, s)
        final = final_step_gap(ops, prior, s)
        whole = concavity_trace_gap(ops, prior, s)
        self.assertTrue(jensen.holds(), jensen.lhs)
        self.assertTrue(middle.holds(), middle.gap)
        self.assertTrue(final.holds(), final.gap)
        self.assertAlmostEqual(middle.gap + final.gap, whole.gap, delta=1e-9 * whole.scale)


class TestWitness(unittest.TestCase):
    def test_replay_is_exact(self):
        from ..channel.ensembles import random_channel
        from ..channel.model import parse_document, dumps_document

        channel, prior = random_channel(np.random.default_rng(61), 3, 3)
        for inequality in INEQUALITIES:
            if inequality == "two-state":
                continue
            report = evaluate_instance(inequality, channel, prior, 0.35, seed=9)
            doc = converter.structure(report.witness, WitnessDocument)
            text = dumps_document(doc)
            again = replay_witness(parse_document(text, WitnessDocument))
            self.assertEqual((again.lhs, again.rhs), (report.lhs, report.rhs))

    def test_unknown(self):
        states = (DensityMatrix(np.diag([0.7, 0.3])), DensityMatrix(np.diag([0.2, 0.8])))
        channel, prior = Channel(states), Prior.uniform(2)
        with self.assertRaises(UnknownInequalityError):
            evaluate_instance("nope", channel, prior, 0.5)

