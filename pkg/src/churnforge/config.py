"""Pipeline configuration: one JSON document drives every command."""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from ._util import hash_obj
from .learners import ModelKind, SamplingMode
from .selection import SelectionPolicy
from .synthetic import SyntheticSpec

FEATURE_SETS = ("STATISTICAL", "SNA", "COMBINED")


class ConfigError(ValueError):
    """Invalid configuration; the CLI maps it to exit code 2."""


@dataclass
class LearnerConfig:
    kind: str = ModelKind.XGB_STYLE.value
    params: dict = field(default_factory=dict)
    grid: dict | list | None = None
    cv_folds: int = 10
    sampling: str | None = None  # None: the algorithm's default
    train_fraction: float = 0.7


@dataclass
class ExperimentConfig:
    feature_sets: list[str] = field(default_factory=lambda: list(FEATURE_SETS))
    algorithms: list[str] = field(default_factory=lambda: [k.value for k in ModelKind])
    sampling_modes: list[str] = field(default_factory=lambda: [m.value for m in SamplingMode])
    statistical_windows: list[int] = field(default_factory=lambda: list(range(1, 10)))
    sna_windows: list[int] = field(default_factory=lambda: [1, 2, 3, 4, 5, 6])
    sweep_algorithm: str = ModelKind.XGB_STYLE.value
    algorithm_params: dict = field(default_factory=dict)  # kind -> params


@dataclass
class PipelineConfig:
    seed: int
    workdir: Path = Path("work")
    cdr: Path | None = None
    profiles: Path | None = None
    labels: Path | None = None
    baseline: str | None = None
    statistical_window_months: int = 6
    sna_window_months: int = 4
    exclusion_months: int = 4
    feature_set: str = "COMBINED"
    damping: float = 0.85
    tol: float = 1e-8
    max_iter: int = 300
    categorical_columns: list[str] = field(default_factory=list)
    selection: SelectionPolicy = field(default_factory=SelectionPolicy)
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)

    # resolved locations of the raw inputs
    @property
    def data_dir(self) -> Path:
        return self.workdir / "data"

    @property
    def cdr_path(self) -> Path:
        return self.cdr or self.data_dir / "cdr.csv"

    @property
    def profiles_path(self) -> Path:
        return self.profiles or self.data_dir / "profiles.csv"

    @property
    def labels_path(self) -> Path:
        return self.labels or self.data_dir / "labels.csv"

    @property
    def baseline_date(self) -> dt.date:
        if self.baseline is None:
            return self.synthetic.baseline
        return dt.date.fromisoformat(self.baseline)

    def validate(self) -> "PipelineConfig":
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        for name in ("statistical_window_months", "sna_window_months"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1 month")
        if self.exclusion_months < 0:
            raise ConfigError("exclusion_months must be >= 0")
        if self.feature_set not in FEATURE_SETS:
            raise ConfigError(f"feature_set must be one of {list(FEATURE_SETS)}")
        if not 0.0 < self.damping < 1.0:
            raise ConfigError(f"damping must lie in (0, 1), got {self.damping}")
        if self.tol <= 0 or self.max_iter < 1:
            raise ConfigError("tol must be positive and max_iter at least 1")
        if self.baseline is not None:
            try:
                dt.date.fromisoformat(self.baseline)
            except ValueError as exc:
                raise ConfigError(f"baseline: {exc}") from None
        p = self.selection
        if not (0 <= p.max_row_missing <= 1 and 0 <= p.max_column_missing <= 1):
            raise ConfigError("missing-share thresholds must lie in [0, 1]")
        if p.max_categories < 1:
            raise ConfigError("max_categories must be positive")
        if p.correlation_threshold is not None and not 0 < p.correlation_threshold <= 1:
            raise ConfigError("correlation_threshold must lie in (0, 1]")
        lc = self.learner
        _enum(ModelKind, lc.kind, "learner.kind")
        if lc.sampling is not None:
            _enum(SamplingMode, lc.sampling, "learner.sampling")
        if lc.cv_folds < 2:
            raise ConfigError("learner.cv_folds must be at least 2")
        if not 0 < lc.train_fraction < 1:
            raise ConfigError("learner.train_fraction must lie in (0, 1)")
        ex = self.experiment
        for fs in ex.feature_sets:
            if fs not in FEATURE_SETS:
                raise ConfigError(f"unknown feature set {fs!r}")
        for a in ex.algorithms + [ex.sweep_algorithm] + list(ex.algorithm_params):
            _enum(ModelKind, a, "experiment algorithm")
        for m in ex.sampling_modes:
            _enum(SamplingMode, m, "experiment sampling mode")
        if any(w < 1 for w in ex.statistical_windows + ex.sna_windows):
            raise ConfigError("sweep windows must be at least 1 month")
        try:
            self.synthetic.validate()
        except ValueError as exc:
            raise ConfigError(f"synthetic: {exc}") from None
        return self

    def to_dict(self) -> dict:
        d = {
            "seed": self.seed,
            "workdir": str(self.workdir),
            "cdr": None if self.cdr is None else str(self.cdr),
            "profiles": None if self.profiles is None else str(self.profiles),
            "labels": None if self.labels is None else str(self.labels),
            "baseline": self.baseline,
            "statistical_window_months": self.statistical_window_months,
            "sna_window_months": self.sna_window_months,
            "exclusion_months": self.exclusion_months,
            "feature_set": self.feature_set,
            "damping": self.damping,
            "tol": self.tol,
            "max_iter": self.max_iter,
            "categorical_columns": list(self.categorical_columns),
            "selection": self.selection.to_dict(),
            "learner": asdict(self.learner),
            "experiment": asdict(self.experiment),
            "synthetic": self.synthetic.to_dict(),
        }
        return d

    def digest(self, *sections: str) -> str:
        """Hash of the whole config, or of the named top-level sections only.
        Paths are left out so a moved workdir keeps its hashes."""
        d = self.to_dict()
        for k in ("workdir", "cdr", "profiles", "labels"):
            d.pop(k)
        if sections:
            d = {k: d[k] for k in sections}
        return hash_obj(d)[:16]


def _enum(cls, value, what):
    try:
        cls(value)
    except ValueError:
        raise ConfigError(f"{what}: {value!r} is not one of {[m.value for m in cls]}") from None


def _sub(cls, raw, what):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"{what} must be an object")
    try:
        return cls(**raw)
    except TypeError as exc:
        raise ConfigError(f"{what}: {exc}") from None


_TOP_KEYS = {
    "seed", "workdir", "cdr", "profiles", "labels", "baseline", "statistical_window_months",
    "sna_window_months", "exclusion_months", "feature_set", "damping", "tol", "max_iter", "categorical_columns",
    "selection", "learner", "experiment", "synthetic",
}


def config_from_dict(raw: dict, base_dir: Path | None = None) -> PipelineConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "seed" not in raw:
        raise ConfigError("seed is required; there is no implicit entropy")
    base_dir = base_dir or Path(".")

    def path(key, default=None):
        v = raw.get(key, default)
        if v is None:
            return None
        p = Path(v)
        return p if p.is_absolute() else base_dir / p

    sel = raw.get("selection") or {}
    try:
        policy = SelectionPolicy.from_dict(sel)
    except TypeError as exc:
        raise ConfigError(f"selection: {exc}") from None
    syn = raw.get("synthetic") or {}
    try:
        spec = SyntheticSpec.from_dict(syn)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"synthetic: {exc}") from None
    try:
        cfg = PipelineConfig(
            seed=raw["seed"],
            workdir=path("workdir", "work"),
            cdr=path("cdr"),
            profiles=path("profiles"),
            labels=path("labels"),
            baseline=raw.get("baseline"),
            statistical_window_months=int(raw.get("statistical_window_months", 6)),
            sna_window_months=int(raw.get("sna_window_months", 4)),
            exclusion_months=int(raw.get("exclusion_months", 4)),
            feature_set=raw.get("feature_set", "COMBINED"),
            damping=float(raw.get("damping", 0.85)),
            tol=float(raw.get("tol", 1e-8)),
            max_iter=int(raw.get("max_iter", 300)),
            categorical_columns=list(raw.get("categorical_columns", [])),
            selection=policy,
            learner=_sub(LearnerConfig, raw.get("learner"), "learner"),
            experiment=_sub(ExperimentConfig, raw.get("experiment"), "experiment"),
            synthetic=spec,
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    return cfg.validate()


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return config_from_dict(raw, path.parent)
