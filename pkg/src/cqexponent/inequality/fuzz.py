"""
Randomised campaigns over the inequalities of :mod:`.theorem`.

Instance ``i`` of a campaign depends only on (seed, i); the summary is a
min/count reduction, so it does not depend on evaluation order.
"""

from __future__ import annotations

import unittest
from dataclasses import dataclass, field

import numpy as np

from ..channel.ensembles import StateEnsemble, random_prior, random_states
from ..channel.model import Channel, DensityMatrix, Prior
from ..common.errors import ConfigError, CQExponentError
from ..common.seeding import instance_rng
from ..common.settings import get_settings
from ..common.utils import log, timed
from .report import InequalityReport
from .theorem import (
    INEQUALITIES,
    SUPPORT_RESTRICTED,
    concavity_trace_gap_scalar,
    evaluate_instance,
)


@dataclass
class FuzzConfig:
    a_range: tuple[int, int] = (1, 4)
    d_range: tuple[int, int] = (2, 6)
    s_range: tuple[float, float] = (0.0, 1.0)
    instance_count: int = 1000
    seed: int = 42
    state_ensemble: tuple[StateEnsemble, ...] = (StateEnsemble.HAAR_MIXED,)
    s_points: int | None = None
    epsilon: float = 1e-3
    tolerance: float | None = None
    shrink: bool = True

    def __post_init__(self):
        if isinstance(self.state_ensemble, (str, StateEnsemble)):
            self.state_ensemble = (self.state_ensemble,)
        self.state_ensemble = tuple(StateEnsemble(e) for e in self.state_ensemble)
        self.a_range = (int(self.a_range[0]), int(self.a_range[1]))
        self.d_range = (int(self.d_range[0]), int(self.d_range[1]))
        self.s_range = (float(self.s_range[0]), float(self.s_range[1]))
        if not 1 <= self.a_range[0] <= self.a_range[1]:
            raise ConfigError(f"invalid alphabet range {self.a_range}")
        if not 1 <= self.d_range[0] <= self.d_range[1]:
            raise ConfigError(f"invalid dimension range {self.d_range}")
        lo, hi = self.s_range
        if not (-1.0 < lo <= hi <= 1.0):
            raise ConfigError(f"s range must satisfy -1 < s_min <= s_max <= 1, got {self.s_range}")
        if self.instance_count < 1:
            raise ConfigError("instance_count must be at least 1")
        if not self.state_ensemble:
            raise ConfigError("at least one state ensemble is required")
        if self.s_points is not None and self.s_points < 1:
            raise ConfigError("s_points must be positive")

    @property
    def explores(self) -> bool:
        """
        Whether some instances may fall in the open region s < 0.
        """
        return self.s_range[0] < 0

    @property
    def tol(self) -> float:
        return get_settings().assert_tol if self.tolerance is None else self.tolerance

    def s_grid(self) -> np.ndarray | None:
        if self.s_points is None:
            return None
        return np.linspace(self.s_range[0], self.s_range[1], self.s_points)


@dataclass
class FuzzInstance:
    index: int
    channel: Channel
    prior: Prior
    s: float
    ensemble: StateEnsemble


def generate_instance(cfg: FuzzConfig, index: int, inequality_id: str = "theorem") -> FuzzInstance:
    rng = instance_rng(cfg.seed, index)
    if inequality_id == "two-state":
        a = 2
    else:
        a = int(rng.integers(cfg.a_range[0], cfg.a_range[1] + 1))
    d = int(rng.integers(cfg.d_range[0], cfg.d_range[1] + 1))
    grid = cfg.s_grid()
    if grid is not None:
        s = float(grid[int(rng.integers(len(grid)))])
    else:
        s = float(rng.uniform(cfg.s_range[0], cfg.s_range[1]))
    ensemble = cfg.state_ensemble[index % len(cfg.state_ensemble)]
    states = random_states(rng, a, d, ensemble, cfg.epsilon)
    prior = Prior.uniform(2) if inequality_id == "two-state" else random_prior(rng, a)
    return FuzzInstance(index, Channel(tuple(states)), prior, s, ensemble)


@dataclass
class FuzzSummary:
    """
    Instances with s >= 0 are asserted and counted in ``violations``; instances
    with s < 0 are explored and only reported through ``explored_violations``.
    ``worst`` is the smallest relative gap among asserted instances, or among
    explored ones when the campaign asserted nothing. Evaluation errors are
    counted in ``errors`` and never turn into violations.
    """

    inequality_id: str
    instances: int
    evaluated: int = 0
    violations: int = 0
    explored: int = 0
    explored_violations: int = 0
    errors: int = 0
    min_gap: float = float("inf")
    worst: InequalityReport | None = None
    shrunk: InequalityReport | None = None
    tolerance: float = 1e-9
    oracle_max_deviation: float | None = None
    error_messages: list[str] = field(default_factory=list)

    @property
    def asserted(self) -> int:
        return self.evaluated - self.explored

    @property
    def exploratory(self) -> bool:
        return self.explored > 0

    @property
    def status(self) -> str:
        if self.violations:
            return "violated"
        return "exploratory" if self.exploratory else "ok"


def _compress(channel: Channel) -> Channel | None:
    """
    Leading (d-1)x(d-1) block of every state, renormalised.
    """
    if channel.dim < 2:
        return None
    states = []
    for st in channel.states:
        block = st.data[:-1, :-1]
        trace = float(np.trace(block).real)
        if trace <= 1e-12:
            return None
        states.append(DensityMatrix(block / trace))
    return Channel(tuple(states))


def _drop_letter(channel: Channel, prior: Prior, index: int) -> tuple[Channel, Prior] | None:
    keep = [i for i in range(channel.alphabet_size) if i != index]
    w = np.array([prior.weights[i] for i in keep])
    if w.sum() <= 0:
        return None
    return channel.permuted(keep), Prior.normalized(w)


def _contract(channel: Channel, prior: Prior, factor: float = 0.5) -> Channel:
    """
    Move every state toward the prior average by ``factor``.
    """
    mean = sum(w * st.data for w, st in zip(prior.weights, channel.states))
    states = [mean + factor * (st.data - mean) for st in channel.states]
    return Channel(tuple(DensityMatrix(m) for m in states))


def shrink(
    inequality_id: str,
    channel: Channel,
    prior: Prior,
    s: float,
    tol: float,
    support_only: bool = False,
    explore: bool = False,
    max_rounds: int = 50,
) -> InequalityReport:
    """
    Greedily simplify a violating instance while the gap stays below -tol * scale.

    Tries, in order: dropping an input letter, dropping a dimension, and
    halving the spread of the states around their average.
    """

    def attempt(ch: Channel, pr: Prior) -> InequalityReport | None:
        try:
            r = evaluate_instance(inequality_id, ch, pr, s, support_only=support_only, explore=explore)
        except CQExponentError:
            return None
        return None if r.holds(tol) else r

    best = evaluate_instance(inequality_id, channel, prior, s, support_only=support_only, explore=explore)
    for _ in range(max_rounds):
        candidates: list[tuple[Channel, Prior]] = []
        if inequality_id != "two-state" and channel.alphabet_size > 1:
            for i in range(channel.alphabet_size):
                dropped = _drop_letter(channel, prior, i)
                if dropped is not None:
                    candidates.append(dropped)
        compressed = _compress(channel)
        if compressed is not None:
            candidates.append((compressed, prior))
        if channel.alphabet_size > 1:
            try:
                candidates.append((_contract(channel, prior), prior))
            except CQExponentError:
                pass
        for ch, pr in candidates:
            r = attempt(ch, pr)
            if r is not None:
                channel, prior, best = ch, pr, r
                break
        else:
            break
    return best


def fuzz(inequality_id: str, cfg: FuzzConfig) -> FuzzSummary:
    """
    Evaluate ``cfg.instance_count`` random instances and summarise the smallest relative gap.
    """
    if inequality_id not in INEQUALITIES:
        raise ConfigError(f"unknown inequality {inequality_id!r}; choose from {sorted(INEQUALITIES)}")
    if inequality_id not in SUPPORT_RESTRICTED and any(e.support_restricted for e in cfg.state_ensemble):
        raise ConfigError(f"{inequality_id} needs positive definite states; rank-deficient ensemble not allowed")
    tol = cfg.tol
    summary = FuzzSummary(inequality_id, cfg.instance_count, tolerance=tol)
    # smallest relative gap per region, keyed by "instance is explored"
    lowest: dict[bool, tuple[InequalityReport, FuzzInstance]] = {}
    with timed(f"fuzz {inequality_id} ({cfg.instance_count} instances)"):
        for index in range(cfg.instance_count):
            inst = generate_instance(cfg, index, inequality_id)
            support_only = inst.ensemble.support_restricted
            explored = inst.s < 0
            try:
                report = evaluate_instance(
                    inequality_id, inst.channel, inst.prior, inst.s,
                    seed=cfg.seed, support_only=support_only, explore=explored,
                )
            except CQExponentError as e:
                summary.errors += 1
                summary.error_messages.append(f"instance {index}: {e}")
                log(f"  instance {index}: {e}")
                continue
            report.witness["extra"]["instance"] = float(index)
            summary.evaluated += 1
            if explored:
                summary.explored += 1
            if not report.holds(tol):
                if explored:
                    summary.explored_violations += 1
                else:
                    summary.violations += 1
            current = lowest.get(explored)
            if current is None or report.relative_gap < current[0].relative_gap:
                lowest[explored] = (report, inst)
            if inequality_id == "theorem" and inst.ensemble is StateEnsemble.DIAGONAL:
                diagonals = [np.diag(st.power(1 / (1 + inst.s)).data).real for st in inst.channel.states]
                oracle = concavity_trace_gap_scalar(diagonals, inst.prior, inst.s)
                deviation = abs(oracle.gap - report.gap)
                summary.oracle_max_deviation = max(summary.oracle_max_deviation or 0.0, deviation)
    worst_instance: FuzzInstance | None = None
    if lowest:
        summary.worst, worst_instance = lowest[False] if False in lowest else lowest[True]
        summary.min_gap = summary.worst.relative_gap
    if cfg.shrink and summary.violations and worst_instance is not None:
        log(f"shrinking instance {worst_instance.index}")
        summary.shrunk = shrink(
            inequality_id, worst_instance.channel, worst_instance.prior, worst_instance.s, tol,
            support_only=worst_instance.ensemble.support_restricted,
        )
    return summary


class TestFuzzConfig(unittest.TestCase):
    def test_validation(self):
        with self.assertRaises(ConfigError):
            FuzzConfig(a_range=(3, 2))
        with self.assertRaises(ConfigError):
            FuzzConfig(s_range=(-1.0, 0.5))
        with self.assertRaises(ConfigError):
            FuzzConfig(instance_count=0)
        cfg = FuzzConfig(state_ensemble="diagonal")
        self.assertEqual(cfg.state_ensemble, (StateEnsemble.DIAGONAL,))

    def test_instances_are_counter_seeded(self):
        cfg = FuzzConfig(seed=5)
        a = generate_instance(cfg, 3)
        b = generate_instance(cfg, 3)
        self.assertEqual(a.s, b.s)
        for x, y in zip(a.channel.states, b.channel.states):
            np.testing.assert_array_equal(x.data, y.data)


class TestFuzz(unittest.TestCase):
    def test_theorem_campaign_has_no_violations(self):
        cfg = FuzzConfig(
            instance_count=300, seed=42, s_points=11,
            state_ensemble=("haar-mixed", "diagonal", "near-identical"),
        )
        summary = fuzz("theorem", cfg)
        self.assertEqual(summary.violations, 0)
        self.assertEqual(summary.errors, 0)
        self.assertEqual(summary.status, "ok")
        self.assertGreaterEqual(summary.min_gap, -1e-9)
        self.assertLessEqual(summary.oracle_max_deviation, 1e-10)

    def test_diagonal_two_letter_oracle(self):
        cfg = FuzzConfig(a_range=(2, 2), instance_count=100, seed=3, state_ensemble="diagonal")
        summary = fuzz("theorem", cfg)
        self.assertLessEqual(summary.oracle_max_deviation, 1e-10)

    def test_proof_steps(self):
        cfg = FuzzConfig(instance_count=100, seed=8, s_points=11)
        for inequality in ("jensen", "intermediate", "final-step", "eq3"):
            summary = fuzz(inequality, cfg)
            self.assertEqual(summary.violations, 0, inequality)
            self.assertEqual(summary.errors, 0, inequality)

    def test_deterministic(self):
        cfg = FuzzConfig(instance_count=40, seed=11)
        a, b = fuzz("theorem", cfg), fuzz("theorem", cfg)
        self.assertEqual(a.min_gap, b.min_gap)
        self.assertEqual(a.worst.witness, b.worst.witness)

    def test_open_region_is_exploratory(self):
        cfg = FuzzConfig(instance_count=50, seed=13, s_range=(-0.9, 0.0))
        summary = fuzz("theorem", cfg)
        self.assertEqual(summary.status, "exploratory")
        self.assertIsNotNone(summary.worst)
        self.assertLessEqual(summary.worst.witness["s"], 0.0)
        self.assertEqual(summary.explored, summary.evaluated)
        self.assertEqual(summary.violations, 0)

    def test_mixed_range_asserts_nonnegative_s(self):
        # tolerance -1 demands gap >= scale, which no instance reaches
        cfg = FuzzConfig(instance_count=40, seed=5, s_range=(-0.5, 0.5), s_points=2, tolerance=-1.0, shrink=False)
        summary = fuzz("theorem", cfg)
        self.assertGreater(summary.explored, 0)
        self.assertGreater(summary.asserted, 0)
        self.assertEqual(summary.violations, summary.asserted)
        self.assertEqual(summary.explored_violations, summary.explored)
        self.assertEqual(summary.status, "violated")
        self.assertEqual(summary.worst.witness["s"], 0.5)

    def test_rank_deficient_only_for_support_restricted(self):
        cfg = FuzzConfig(instance_count=20, seed=2, state_ensemble="rank-deficient")
        with self.assertRaises(ConfigError):
            fuzz("jensen", cfg)
        summary = fuzz("theorem", cfg)
        self.assertEqual(summary.violations, 0)

    def test_shrink_keeps_violation(self):
        # with tol = -10 no instance can hold, so shrinking runs to a single letter in dimension 1
        channel = Channel((DensityMatrix(np.diag([0.6, 0.3, 0.1])), DensityMatrix(np.diag([0.2, 0.3, 0.5]))))
        report = shrink("theorem", channel, Prior.uniform(2), 0.5, tol=-10.0)
        self.assertFalse(report.holds(-10.0))
        self.assertEqual(len(report.witness["states"]), 1)
        self.assertEqual(report.witness["dim"], 1)
