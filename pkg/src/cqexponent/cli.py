"""
Command-line front end.

Every subcommand builds its whole document before printing, so identical
arguments give byte-identical output. Diagnostics and ``--verbose`` timings
go to stderr.

Exit codes: 0 success, 1 inequality violated, 2 input error, 3 exploratory run.
"""

from __future__ import annotations

import math
import sys
import unittest
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Sequence

import fire
import numpy as np

from .channel.ensembles import StateEnsemble
from .channel.model import (
    Channel,
    Prior,
    WitnessDocument,
    binary_symmetric_channel,
    converter,
    dumps_channel,
    load_channel,
    orthogonal_pure_channel,
    parse_document,
    save_channel,
)
from .coding.sim import random_code_trial
from .common.errors import ConfigError, CQExponentError
from .common.settings import init_settings
from .exponent.auxiliary import default_grid, eq_aux
from .inequality.fuzz import FuzzConfig, fuzz
from .inequality.verify import run_verification, verify_witness
from .rate.optimizer import capacity_ascent, capacity_estimate, curve
from .render import (
    CapacityReport,
    EqTable,
    RateCurve,
    TrialTable,
    check_unit,
    render_report,
)

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_INPUT = 2
EXIT_EXPLORATORY = 3


def float_list(value: Any) -> tuple[float, ...] | None:
    """
    Accept a number, a sequence, or a comma separated string.
    """
    if value is None:
        return None
    if isinstance(value, (int, float)):
        return (float(value),)
    if isinstance(value, str):
        parts = [p for p in value.replace(" ", "").split(",") if p]
        try:
            return tuple(float(p) for p in parts)
        except ValueError as e:
            raise ConfigError(f"not a list of numbers: {value!r}") from e
    try:
        return tuple(float(v) for v in value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"not a list of numbers: {value!r}") from e


def int_list(value: Any) -> tuple[int, ...] | None:
    floats = float_list(value)
    if floats is None:
        return None
    if any(not math.isfinite(v) or v != int(v) for v in floats):
        raise ConfigError(f"not a list of integers: {value!r}")
    return tuple(int(v) for v in floats)


def int_flag(name: str, value: Any, minimum: int | None = None) -> int:
    """
    An integer flag; fire hands over strings it could not parse as numbers.
    """
    if isinstance(value, bool):
        raise ConfigError(f"--{name} needs a value")
    try:
        number = float(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"--{name} must be an integer, got {value!r}") from e
    if not number.is_integer():
        raise ConfigError(f"--{name} must be an integer, got {value!r}")
    if minimum is not None and number < minimum:
        raise ConfigError(f"--{name} must be at least {minimum}, got {value!r}")
    return int(number)


def float_flag(name: str, value: Any) -> float:
    if isinstance(value, bool):
        raise ConfigError(f"--{name} needs a value")
    try:
        number = float(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"--{name} must be a number, got {value!r}") from e
    if not math.isfinite(number):
        raise ConfigError(f"--{name} must be finite, got {value!r}")
    return number


def optional(flag: Callable[..., Any], name: str, value: Any, *args: Any) -> Any:
    return None if value is None else flag(name, value, *args)


def save_witness(witness: dict[str, Any], path: str) -> None:
    """
    Store a witness as a channel document that `verify --witness` replays.
    """
    with open(path, "w") as f:
        save_channel(f, converter.structure(witness, WitnessDocument))


@dataclass
class RunConfig:
    subcommand: str
    channel_path: str | None = None
    prior: tuple[float, ...] | None = None
    s: tuple[float, ...] | None = None
    rates: tuple[float, ...] | None = None
    seed: int = 0
    output: str | None = None
    unit: str = "nats"
    json: bool = False
    witness_path: str | None = None
    fuzz: FuzzConfig | None = None
    instances: int | None = None
    s_points: int | None = None
    points: int | None = None
    starts: int | None = None
    trials: int | None = None

    def validate(self) -> None:
        check_unit(self.unit)
        self.seed = int_flag("seed", self.seed, 0)
        self.instances = optional(int_flag, "instances", self.instances, 0)
        self.s_points = optional(int_flag, "s-points", self.s_points, 1)
        self.points = optional(int_flag, "points", self.points, 1)
        self.starts = optional(int_flag, "starts", self.starts, 1)
        self.trials = optional(int_flag, "trials", self.trials, 1)
        needs_channel = self.subcommand in ("eq", "curve", "capacity", "simulate") or (
            self.subcommand == "verify" and self.witness_path is None
        )
        if needs_channel and self.channel_path is None:
            raise ConfigError(f"{self.subcommand} needs --channel")
        if self.subcommand == "verify" and self.witness_path is not None and self.channel_path is not None:
            raise ConfigError("--witness replays a stored instance; do not combine it with --channel")
        if self.s is not None and not self.s:
            raise ConfigError("--s needs at least one value")
        if self.rates is not None and any(r < 0 for r in self.rates):
            raise ConfigError("rates must be nonnegative")

    @property
    def style(self) -> str:
        return "json" if self.json else ("csv" if self.subcommand in ("curve", "simulate") else "text")

    def load(self) -> tuple[Channel, Prior]:
        assert self.channel_path is not None
        with open(self.channel_path) as f:
            channel, prior = load_channel(f)
        if self.prior is not None:
            prior = Prior(self.prior)
            channel.check_prior(prior)
        return channel, prior

    def emit(self, document: str) -> None:
        if self.output is None:
            sys.stdout.write(document)
        else:
            Path(self.output).write_text(document)


class Commands:
    """
    Quantum random-coding exponent toolkit.
    """

    def __init__(self):
        self._exit_code = EXIT_OK

    def _start(self, cfg: RunConfig, verbose: bool) -> RunConfig:
        init_settings(verbose=verbose)
        cfg.validate()
        return cfg

    def eq(self, channel: str, s=None, prior=None, unit: str = "nats", json: bool = False,
           output: str | None = None, verbose: bool = False):
        """
        Print E_q(pi, s) at one s, or a table over several (default: 21 points on [0, 1]).
        """
        cfg = self._start(RunConfig("eq", channel, float_list(prior), float_list(s), unit=unit,
                                    json=json, output=output), verbose)
        ch, pi = cfg.load()
        grid = list(cfg.s) if cfg.s is not None else default_grid()
        values = [eq_aux(ch, pi, x) for x in grid]
        cfg.emit(render_report(EqTable(grid, values), cfg.style, cfg.unit))

    def curve(self, channel: str, rates=None, points: int = 11, starts: int | None = None,
              seed: int = 0, unit: str = "nats", json: bool = False, output: str | None = None,
              verbose: bool = False):
        """
        Rate-exponent CSV. Rates are read in the display unit; the default grid
        runs from 0 to the capacity estimate.
        """
        cfg = self._start(RunConfig("curve", channel, rates=float_list(rates), seed=seed, unit=unit,
                                    json=json, output=output, points=points, starts=starts), verbose)
        ch, _ = cfg.load()
        if cfg.rates is None:
            top = capacity_estimate(ch, cfg.starts, cfg.seed)
            grid = np.linspace(0.0, top, cfg.points).tolist()
        else:
            scale = math.log(2) if cfg.unit == "bits" else 1.0
            grid = [r * scale for r in cfg.rates]
        cfg.emit(render_report(RateCurve(curve(ch, grid, cfg.starts, cfg.seed)), cfg.style, cfg.unit))

    def capacity(self, channel: str, starts: int | None = None, seed: int = 0, unit: str = "nats",
                 json: bool = False, output: str | None = None, verbose: bool = False):
        """
        max over priors of the Holevo quantity.
        """
        cfg = self._start(RunConfig("capacity", channel, seed=seed, unit=unit, json=json, output=output,
                                    starts=starts), verbose)
        ch, _ = cfg.load()
        best = capacity_ascent(ch, cfg.starts, cfg.seed)
        cfg.emit(render_report(CapacityReport(best.value, best.prior), cfg.style, cfg.unit))

    def verify(self, channel: str | None = None, prior=None, instances: int = 1000, seed: int = 0,
               s_points: int = 11, witness: str | None = None, json: bool = False,
               output: str | None = None, verbose: bool = False):
        """
        Property suite over a channel plus randomised inequality campaigns,
        or replay of a stored witness with --witness.
        """
        cfg = self._start(RunConfig("verify", channel, float_list(prior), seed=seed, json=json,
                                    output=output, witness_path=witness, instances=instances,
                                    s_points=s_points), verbose)
        if cfg.witness_path is not None:
            doc = parse_document(Path(cfg.witness_path).read_text(), WitnessDocument)
            summary = verify_witness(doc)
            exploratory = not summary.rows[0].asserted
        else:
            ch, pi = cfg.load()
            summary = run_verification(ch, pi, cfg.instances, cfg.seed, cfg.s_points)
            exploratory = False
        cfg.emit(render_report(summary, cfg.style))
        if summary.violated:
            self._exit_code = EXIT_VIOLATION
        elif exploratory:
            self._exit_code = EXIT_EXPLORATORY

    def fuzz(self, inequality: str = "theorem", instances: int = 1000, seed: int = 42,
             a_min: int = 1, a_max: int = 4, d_min: int = 2, d_max: int = 6,
             s_min: float = 0.0, s_max: float = 1.0, s_points: int | None = None,
             ensemble="haar-mixed", epsilon: float = 1e-3, tolerance: float | None = None,
             shrink: bool = True, witness_out: str | None = None, json: bool = False,
             output: str | None = None, verbose: bool = False):
        """
        Random campaign over one inequality. Instances with s < 0 are explored,
        never asserted; a run that explored and found no asserted violation exits 3.
        """
        ensembles = ensemble.split(",") if isinstance(ensemble, str) else list(ensemble)
        try:
            fuzz_cfg = FuzzConfig(
                a_range=(int_flag("a-min", a_min), int_flag("a-max", a_max)),
                d_range=(int_flag("d-min", d_min), int_flag("d-max", d_max)),
                s_range=(float_flag("s-min", s_min), float_flag("s-max", s_max)),
                instance_count=int_flag("instances", instances, 1),
                seed=int_flag("seed", seed, 0),
                state_ensemble=tuple(StateEnsemble(e) for e in ensembles),
                s_points=optional(int_flag, "s-points", s_points, 1),
                epsilon=float_flag("epsilon", epsilon),
                tolerance=optional(float_flag, "tolerance", tolerance),
                shrink=bool(shrink),
            )
        except ValueError as e:
            if isinstance(e, CQExponentError):
                raise
            raise ConfigError(str(e)) from e
        cfg = self._start(RunConfig("fuzz", seed=fuzz_cfg.seed, json=json, output=output, fuzz=fuzz_cfg),
                          verbose)
        summary = fuzz(inequality, fuzz_cfg)
        cfg.emit(render_report(summary, cfg.style))
        if witness_out is not None and summary.worst is not None:
            worst = summary.shrunk if summary.shrunk is not None else summary.worst
            save_witness(worst.witness, witness_out)
        if summary.violations:
            self._exit_code = EXIT_VIOLATION
        elif summary.exploratory:
            self._exit_code = EXIT_EXPLORATORY

    def simulate(self, channel: str, n=(2, 4, 6), M=None, rate: float | None = None,
                 trials: int = 100, seed: int = 0, prior=None, unit: str = "nats",
                 json: bool = False, output: str | None = None, verbose: bool = False):
        """
        Random codes with square-root-measurement decoding; one CSV row per block length.
        Give either --M (one size for all n) or --rate (M = round(exp(n R)), R in the display unit).
        """
        cfg = self._start(RunConfig("simulate", channel, float_list(prior), seed=seed, unit=unit,
                                    json=json, output=output, trials=trials), verbose)
        lengths = int_list(n)
        if not lengths or any(length < 1 for length in lengths):
            raise ConfigError("--n needs positive block lengths")
        if (M is None) == (rate is None):
            raise ConfigError("simulate needs exactly one of --M and --rate")
        size_flag = optional(int_flag, "M", M, 1)
        nats = optional(float_flag, "rate", rate)
        if nats is not None and nats < 0:
            raise ConfigError("--rate must be nonnegative")
        ch, pi = cfg.load()
        rows = []
        for length in lengths:
            if size_flag is not None:
                size = size_flag
            else:
                size = max(1, round(math.exp(length * nats * (math.log(2) if cfg.unit == "bits" else 1.0))))
            rows.append(random_code_trial(ch, pi, length, size, cfg.trials, cfg.seed))
        cfg.emit(render_report(TrialTable(rows), cfg.style, cfg.unit))


def run(argv: Sequence[str]) -> int:
    """
    Run one subcommand and return its exit code.
    """
    commands = Commands()
    try:
        fire.Fire(commands, command=list(argv), name="cqexponent")
    except fire.core.FireExit as e:
        return EXIT_OK if not e.code else EXIT_INPUT
    except (CQExponentError, OSError) as e:
        print(f"cqexponent: error: {e}", file=sys.stderr)
        return EXIT_INPUT
    return commands._exit_code


class TestRun(unittest.TestCase):
    def setUp(self):
        import tempfile

        self.dir = tempfile.TemporaryDirectory()
        self.addCleanup(self.dir.cleanup)
        self.ortho = str(Path(self.dir.name) / "ortho.json")
        Path(self.ortho).write_text(dumps_channel(orthogonal_pure_channel(2)))
        self.bsc = str(Path(self.dir.name) / "bsc.json")
        Path(self.bsc).write_text(dumps_channel(binary_symmetric_channel(0.1)))

    def _run(self, *argv: str) -> tuple[int, str]:
        out = str(Path(self.dir.name) / "out.txt")
        code = run([*argv, "--output", out])
        text = Path(out).read_text() if Path(out).exists() else ""
        if Path(out).exists():
            Path(out).unlink()
        return code, text

    def test_eq(self):
        code, text = self._run("eq", "--channel", self.ortho, "--s", "0.5")
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(text, "0.34657359028\n")

    def test_eq_domain_error(self):
        code, text = self._run("eq", "--channel", self.ortho, "--s", "-1.5")
        self.assertEqual(code, EXIT_INPUT)
        self.assertEqual(text, "")

    def test_missing_file(self):
        code, _ = self._run("eq", "--channel", str(Path(self.dir.name) / "absent.json"), "--s", "0.5")
        self.assertEqual(code, EXIT_INPUT)

    def test_bits(self):
        code, text = self._run("eq", "--channel", self.ortho, "--s", "0.5", "--unit", "bits")
        self.assertEqual((code, text), (EXIT_OK, "0.5\n"))
        code, _ = self._run("eq", "--channel", self.ortho, "--unit", "hartleys")
        self.assertEqual(code, EXIT_INPUT)

    def test_curve(self):
        code, text = self._run("curve", "--channel", self.ortho, "--rates", "0,0.3", "--starts", "3")
        self.assertEqual(code, EXIT_OK)
        lines = text.splitlines()
        self.assertEqual(lines[0], "R,s_star,value,prior_0,prior_1")
        self.assertEqual(len(lines), 3)

    def test_capacity(self):
        code, text = self._run("capacity", "--channel", self.bsc, "--starts", "3")
        self.assertEqual(code, EXIT_OK)
        self.assertAlmostEqual(float(text), 0.368064, delta=1e-5)

    def test_verify_is_deterministic(self):
        first = self._run("verify", "--channel", self.bsc, "--instances", "10", "--seed", "7")
        second = self._run("verify", "--channel", self.bsc, "--instances", "10", "--seed", "7")
        self.assertEqual(first[0], EXIT_OK)
        self.assertEqual(first, second)

    def test_fuzz_open_region_and_replay(self):
        witness = str(Path(self.dir.name) / "witness.json")
        code, text = self._run("fuzz", "--instances", "20", "--s-min", "-0.9", "--s-max", "0",
                               "--witness-out", witness)
        self.assertEqual(code, EXIT_EXPLORATORY)
        self.assertIn("status: exploratory", text)
        code, text = self._run("verify", "--witness", witness)
        self.assertEqual(code, EXIT_EXPLORATORY)

    def test_fuzz_mixed_range_asserts_nonnegative_s(self):
        code, text = self._run("fuzz", "--instances", "20", "--s-min=-0.5", "--s-max", "0.5",
                               "--s-points", "2", "--tolerance=-1", "--noshrink")
        self.assertEqual(code, EXIT_VIOLATION)
        self.assertIn("status: violated", text)

    def test_non_numeric_flags_are_input_errors(self):
        for argv in (
            ("verify", "--channel", self.bsc, "--instances", "abc"),
            ("fuzz", "--seed", "abc"),
            ("fuzz", "--instances", "2.5"),
            ("curve", "--channel", self.ortho, "--starts", "many"),
            ("simulate", "--channel", self.ortho, "--n", "1", "--M", "two"),
        ):
            code, text = self._run(*argv)
            self.assertEqual(code, EXIT_INPUT, argv)
            self.assertEqual(text, "")

    def test_fuzz_theorem(self):
        code, _ = self._run("fuzz", "--instances", "30", "--s-points", "11",
                            "--ensemble", "haar-mixed,diagonal,near-identical")
        self.assertEqual(code, EXIT_OK)

    def test_simulate(self):
        code, text = self._run("simulate", "--channel", self.ortho, "--n", "1", "--M", "2", "--trials", "50")
        self.assertEqual(code, EXIT_OK)
        self.assertTrue(text.startswith("n,M,R_nats,trials,mean_avg_err,mean_max_err,exponent_proxy\n"))
        code, _ = self._run("simulate", "--channel", self.ortho, "--trials", "5")
        self.assertEqual(code, EXIT_INPUT)
