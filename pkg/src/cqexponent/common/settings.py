from __future__ import annotations

import dataclasses
import os
import unittest
from dataclasses import dataclass
from typing import Any, Mapping

import cattrs

from .errors import ConfigError

ENV_PREFIX = "CQEXPONENT_"


@dataclass
class Settings:
    """
    Numerical tolerances and limits shared by every module.
    """

    eigen_floor: float = 1e-12
    hermitian_tol: float = 1e-12
    trace_tol: float = 1e-10
    prior_tol: float = 1e-12
    assert_tol: float = 1e-9
    formulation_tol: float = 1e-10
    fd_step: float = 1e-4
    gss_tol: float = 1e-8
    dimension_cap: int = 16384
    pd_floor: float = 1e-6
    pair_samples: int = 400
    ascent_starts: int = 20
    ascent_max_iter: int = 200
    eigh_sweep_factor: int = 100
    srm_rcond: float = 1e-12
    verbose: bool = False

    def __post_init__(self):
        for name in ("eigen_floor", "hermitian_tol", "trace_tol", "prior_tol",
                     "assert_tol", "formulation_tol", "fd_step", "gss_tol", "pd_floor", "srm_rcond"):
            if not float(getattr(self, name)) > 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("dimension_cap", "pair_samples", "ascent_starts", "ascent_max_iter",
                     "eigh_sweep_factor"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be at least 1")

    @classmethod
    def from_env(cls, environ: Mapping[str, str] | None = None, **overrides: Any) -> Settings:
        """
        Build settings from ``CQEXPONENT_*`` variables, then apply keyword overrides.
        """
        environ = os.environ if environ is None else environ
        names = {f.name for f in dataclasses.fields(cls)}
        raw: dict[str, Any] = {}
        for key, value in environ.items():
            if not key.startswith(ENV_PREFIX):
                continue
            name = key[len(ENV_PREFIX):].lower()
            if name not in names:
                raise ConfigError(f"unknown setting {key}")
            raw[name] = value
        raw.update(overrides)
        try:
            return _converter.structure(raw, cls)
        except (cattrs.BaseValidationError, ValueError, TypeError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"invalid settings: {e}") from e


def _structure_bool(value: Any, _: type) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off", ""):
        return False
    raise ConfigError(f"not a boolean: {value!r}")


_converter = cattrs.Converter()
_converter.register_structure_hook(bool, _structure_bool)

_settings_instance: Settings | None = None


def init_settings(**overrides: Any) -> Settings:
    """
    Initialise the global settings from the environment plus overrides.
    """
    global _settings_instance
    _settings_instance = Settings.from_env(**overrides)
    return _settings_instance


def get_settings() -> Settings:
    """
    Return the global settings, initialising them from the environment on first use.
    """
    if _settings_instance is None:
        return init_settings()
    return _settings_instance


class TestSettings(unittest.TestCase):
    def test_defaults(self):
        settings = Settings.from_env({})
        self.assertEqual(settings.eigen_floor, 1e-12)
        self.assertEqual(settings.dimension_cap, 16384)
        self.assertFalse(settings.verbose)

    def test_env_overrides(self):
        settings = Settings.from_env(
            {"CQEXPONENT_ASSERT_TOL": "1e-7", "CQEXPONENT_VERBOSE": "yes", "HOME": "/x"}
        )
        self.assertEqual(settings.assert_tol, 1e-7)
        self.assertTrue(settings.verbose)

    def test_keyword_overrides_win(self):
        settings = Settings.from_env({"CQEXPONENT_FD_STEP": "1e-3"}, fd_step=1e-5)
        self.assertEqual(settings.fd_step, 1e-5)

    def test_rejects_unknown_and_invalid(self):
        with self.assertRaises(ConfigError):
            Settings.from_env({"CQEXPONENT_NO_SUCH_THING": "1"})
        with self.assertRaises(ConfigError):
            Settings.from_env({"CQEXPONENT_EIGEN_FLOOR": "-1"})
        with self.assertRaises(ConfigError):
            Settings.from_env({"CQEXPONENT_VERBOSE": "maybe"})

    def test_eigensolver_and_measurement_limits(self):
        settings = Settings.from_env({})
        self.assertEqual(settings.eigh_sweep_factor, 100)
        self.assertEqual(settings.srm_rcond, 1e-12)
        self.assertEqual(Settings.from_env({"CQEXPONENT_EIGH_SWEEP_FACTOR": "5"}).eigh_sweep_factor, 5)
        with self.assertRaises(ConfigError):
            Settings.from_env({"CQEXPONENT_EIGH_SWEEP_FACTOR": "0"})
        with self.assertRaises(ConfigError):
            Settings.from_env({"CQEXPONENT_SRM_RCOND": "0"})
