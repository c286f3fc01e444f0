"""Run configuration shared by the pipeline, the CV harness and the CLI."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, fields
from pathlib import Path

import yaml

from .features import FEATURE_SETS, fs_index

MODELS = ("gbt", "forest", "ridge", "logistic")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    data_dir: str = "data"
    out: str = "artifacts"
    task: int = 2
    feature_set: str = "FS8"
    model: str = "gbt"
    k: int = 10
    seed: int = 0
    workers: int = 1
    cv_folds: int = 2
    # learner hyperparameters; max_depth None means the model default
    n_estimators: int = 100
    learning_rate: float = 0.1
    max_depth: int | None = None
    min_samples_leaf: int = 1
    l2_lambda: float = 1.0
    max_iter: int = 100
    # experiment switches
    normalize_targets: bool = False
    log_transform: bool = False
    scale_features: bool = False
    weighting: str = "uniform"
    drop_columns: tuple[str, ...] = ()
    stack_ridge: bool = False
    stack_lambda: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "drop_columns", tuple(self.drop_columns))
        self.validate()

    def validate(self):
        if self.feature_set not in FEATURE_SETS:
            raise ConfigError(f"feature_set must be one of FS1..FS10, got {self.feature_set!r}")
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.task not in (1, 2):
            raise ConfigError(f"task must be 1 or 2, got {self.task!r}")
        if self.task == 2 and fs_index(self.feature_set) >= 9:
            raise ConfigError("FS9/FS10 are branch features and only apply to task 1")
        if self.task == 1 and self.model == "logistic":
            raise ConfigError("task 1 is a regression task; use gbt, forest or ridge")
        if self.k < 1 or self.cv_folds < 2 or self.workers < 1 or self.n_estimators < 1:
            raise ConfigError("k, workers, n_estimators must be >= 1 and cv_folds >= 2")
        if not 0 <= self.learning_rate <= 1:
            raise ConfigError("learning_rate must lie in [0, 1]")
        if self.weighting not in ("uniform", "recency"):
            raise ConfigError("weighting must be 'uniform' or 'recency'")
        if self.stack_ridge and self.task != 1:
            raise ConfigError("stack_ridge only applies to task 1")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["drop_columns"] = list(self.drop_columns)
        return d

    def fingerprint(self) -> dict:
        """Fields that determine results; paths and worker count excluded."""
        d = self.to_dict()
        for key in ("data_dir", "out", "workers"):
            d.pop(key)
        return d

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def load_config_file(path) -> dict:
    """Read a YAML or JSON key-value document mirroring :class:`RunConfig`."""
    text = Path(path).read_text()
    data = yaml.safe_load(text) if str(path).endswith((".yaml", ".yml")) else json.loads(text)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    return data
