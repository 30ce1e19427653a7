"""Experiment configuration: a YAML document of nested key/value sections.

Example (see the README for the full grammar):

    n: 256
    m: 128
    operator_kind: partial-orthogonal
    delta0: 0.05
    seed: 7
    trials: 1
    output_path: out/run
    prior:
      weights: [0.9, 0.1]
      means: [0.0, 0.0]
      variances: [0.0, 1.0]
    stmp:
      max_iters: 50
      tol: 1.0e-4
      beta: 0.8

Optional sections ``sweep`` (ratios/delta0s grids) and ``fit`` (sigma_grid,
n_samples, dim) feed the sweep and fit-score subcommands.  Unknown keys and
missing required fields are reported by name.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import yaml

from ..driver import StmpConfig
from ..priors import GmmPrior

OPERATOR_KINDS = ("dense-gaussian", "partial-orthogonal")

GENERATOR_ID = "numpy.random.Philox"


class ConfigError(ValueError):
    """Malformed configuration; the message names the offending field."""


def _require(mapping: dict, key: str, where: str):
    if key not in mapping:
        raise ConfigError(f"missing required field '{key}' in {where}")
    return mapping[key]


def _check_known(mapping: dict, known: set[str], where: str):
    for key in mapping:
        if key not in known:
            raise ConfigError(f"unknown field '{key}' in {where}")


def _float_list(value, name: str) -> list[float]:
    if not isinstance(value, (list, tuple)) or not value:
        raise ConfigError(f"'{name}' must be a nonempty list of numbers")
    try:
        return [float(v) for v in value]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"'{name}' must contain only numbers: {exc}") from exc


@dataclass
class SweepGrid:
    ratios: list[float]
    delta0s: list[float]


@dataclass
class FitSpec:
    sigma_grid: list[float]
    n_samples: int = 1000
    dim: int = 64


@dataclass
class ExperimentConfig:
    n: int
    m: int
    operator_kind: str
    prior: GmmPrior
    delta0: float  # noise standard deviation
    seed: int
    stmp: StmpConfig = field(default_factory=StmpConfig)
    trials: int = 1
    output_path: str = "out"
    workers: int = 4
    sweep: SweepGrid | None = None
    fit: FitSpec | None = None

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ConfigError(f"dimensions must be positive, got n={self.n}, m={self.m}")
        if self.operator_kind not in OPERATOR_KINDS:
            raise ConfigError(
                f"operator_kind must be one of {OPERATOR_KINDS}, got '{self.operator_kind}'"
            )
        if self.delta0 < 0:
            raise ConfigError(f"delta0 must be nonnegative, got {self.delta0}")
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")

    @property
    def noise_var(self) -> float:
        return self.delta0 * self.delta0


def _parse_prior(section, where="prior") -> GmmPrior:
    if not isinstance(section, dict):
        raise ConfigError(f"'{where}' must be a mapping")
    _check_known(section, {"weights", "means", "variances"}, where)
    try:
        return GmmPrior(
            np.asarray(_float_list(_require(section, "weights", where), f"{where}.weights")),
            np.asarray(_float_list(_require(section, "means", where), f"{where}.means")),
            np.asarray(_float_list(_require(section, "variances", where), f"{where}.variances")),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid {where}: {exc}") from exc


def _parse_stmp(section) -> StmpConfig:
    if section is None:
        return StmpConfig()
    if not isinstance(section, dict):
        raise ConfigError("'stmp' must be a mapping")
    known = {"max_iters", "tol", "beta", "init_var", "old_is_damped"}
    _check_known(section, known, "stmp")
    kwargs = {}
    for key in known:
        if key in section:
            kwargs[key] = section[key]
    try:
        return StmpConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid stmp section: {exc}") from exc


def config_from_dict(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a mapping of fields")
    known = {
        "n", "m", "operator_kind", "prior", "delta0", "seed", "stmp",
        "trials", "output_path", "workers", "sweep", "fit",
    }
    _check_known(doc, known, "config root")

    sweep = None
    if doc.get("sweep") is not None:
        section = doc["sweep"]
        if not isinstance(section, dict):
            raise ConfigError("'sweep' must be a mapping")
        _check_known(section, {"ratios", "delta0s"}, "sweep")
        sweep = SweepGrid(
            ratios=_float_list(_require(section, "ratios", "sweep"), "sweep.ratios"),
            delta0s=_float_list(_require(section, "delta0s", "sweep"), "sweep.delta0s"),
        )
        if any(not 0.0 < r <= 1.0 for r in sweep.ratios):
            raise ConfigError("sweep.ratios must lie in (0, 1]")

    fit = None
    if doc.get("fit") is not None:
        section = doc["fit"]
        if not isinstance(section, dict):
            raise ConfigError("'fit' must be a mapping")
        _check_known(section, {"sigma_grid", "n_samples", "dim"}, "fit")
        fit = FitSpec(
            sigma_grid=_float_list(_require(section, "sigma_grid", "fit"), "fit.sigma_grid"),
            n_samples=int(section.get("n_samples", 1000)),
            dim=int(section.get("dim", 64)),
        )
        if fit.n_samples < 3 or fit.dim < 1:
            raise ConfigError("fit.n_samples must be >= 3 and fit.dim >= 1")

    try:
        return ExperimentConfig(
            n=int(_require(doc, "n", "config root")),
            m=int(_require(doc, "m", "config root")),
            operator_kind=str(_require(doc, "operator_kind", "config root")),
            prior=_parse_prior(_require(doc, "prior", "config root")),
            delta0=float(_require(doc, "delta0", "config root")),
            seed=int(_require(doc, "seed", "config root")),
            stmp=_parse_stmp(doc.get("stmp")),
            trials=int(doc.get("trials", 1)),
            output_path=str(doc.get("output_path", "out")),
            workers=int(doc.get("workers", 4)),
            sweep=sweep,
            fit=fit,
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        line = mark.line + 1 if mark is not None else "?"
        raise ConfigError(f"{path}: YAML parse error at line {line}: {exc.problem}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: YAML parse error: {exc}") from exc
    return config_from_dict(doc)


def save_model_file(path, affine, constant_trace, meta: dict | None = None) -> None:
    """Serialize fitted score models as YAML; floats round-trip exactly."""
    doc = {
        "generator": GENERATOR_ID,
        "first_order": affine.to_dict(),
        "second_order": constant_trace.to_dict(),
    }
    if meta:
        doc["meta"] = meta
    with open(path, "w") as fh:
        yaml.safe_dump(doc, fh, sort_keys=True)


def load_model_file(path):
    """Load fitted (AffineScore, ConstantTrace) models from a YAML file."""
    from ..score import AffineScore, ConstantTrace

    with open(path) as fh:
        doc = yaml.safe_load(fh)
    try:
        return (
            AffineScore.from_dict(doc["first_order"]),
            ConstantTrace.from_dict(doc["second_order"]),
        )
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"{path}: malformed model file: {exc}") from exc
