"""End-to-end fit / predict: imputation, encoding, clustering, features, transforms, model.

All stateful pieces are fitted on the training data only and reused on new data.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .clustering import KMeansModel, kmeans_fit
from .config import RunConfig
from .data import Dataset, EncodingMap, age_mode, fit_encoding, impute_age_cat
from .features import (
    FeatureMatrix,
    StandardScaler,
    assemble,
    fs_index,
    log_transform,
    scale_features,
)
from .models import ModelBank, fit_learner, model_from_dict, rank_top, train_branch_bank

__all__ = ["Pipeline", "fit_feature_state"]


def fit_feature_state(ds: Dataset, cfg: RunConfig):
    """Age mode, encoding and (for FS8+) k-means fitted on ``ds``."""
    mode = age_mode(ds.users)
    imputed = ds.with_users(impute_age_cat(ds.users, mode))
    encoding = fit_encoding(imputed)
    kmeans = None
    if fs_index(cfg.feature_set) >= 8:
        homes = imputed.users[["geo_x", "geo_y"]].to_numpy(dtype=np.float64)
        kmeans = kmeans_fit(homes, k=cfg.k, seed=cfg.seed)
    return mode, encoding, kmeans


@dataclass
class Pipeline:
    config: RunConfig
    age_mode: str | None = None
    encoding: EncodingMap | None = None
    kmeans: KMeansModel | None = None
    scaler: StandardScaler | None = None
    model: object = None
    manifest_hash: str | None = None

    def featurize(self, ds: Dataset, fit_scaler: bool = False) -> FeatureMatrix:
        cfg = self.config
        users = impute_age_cat(ds.users, self.age_mode)
        fm = assemble(cfg.feature_set, ds.with_users(users), self.encoding, self.kmeans,
                      weighting=cfg.weighting)
        if cfg.drop_columns:
            fm = fm.drop(cfg.drop_columns)
        if cfg.log_transform:
            fm = log_transform(fm)
        if cfg.scale_features:
            if fit_scaler:
                fm, self.scaler = scale_features(fm)
            else:
                fm, _ = scale_features(fm, self.scaler)
        return fm

    def fit(self, ds: Dataset, workers: int | None = None) -> "Pipeline":
        cfg = self.config
        workers = cfg.workers if workers is None else workers
        self.age_mode, self.encoding, self.kmeans = fit_feature_state(ds, cfg)
        fm = self.featurize(ds, fit_scaler=True)
        self.manifest_hash = fm.manifest_hash()
        if cfg.task == 1:
            self.model = train_branch_bank(fm, ds.visits, ds.branches, cfg,
                                           normalize_targets=cfg.normalize_targets,
                                           workers=workers)
        else:
            if not ds.has_labels:
                raise ValueError("task 2 needs a 'target' column in users.csv")
            y = ds.users["target"].to_numpy(dtype=np.float64)
            self.model = fit_learner(cfg, fm.values, y, classification=True, seed=cfg.seed)
        return self

    def predict_top5(self, ds: Dataset, workers: int | None = None):
        """(user_ids, per-user top-5 lists) for task 1."""
        workers = self.config.workers if workers is None else workers
        fm = self.featurize(ds)
        P = self.model.predict_matrix(fm, workers=workers)
        return fm.user_ids, rank_top(P, self.model.branch_ids, 5)

    def predict_scores(self, ds: Dataset):
        """(user_ids, up-sell scores) for task 2."""
        fm = self.featurize(ds)
        return fm.user_ids, np.asarray(self.model.predict(fm.values), dtype=np.float64)

    # ----------------------------------------------------------- persistence

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "manifest_hash": self.manifest_hash,
            "age_mode": self.age_mode,
            "encoding": self.encoding.to_dict(),
            "kmeans": None if self.kmeans is None else self.kmeans.to_dict(),
            "scaler": None if self.scaler is None else self.scaler.to_dict(),
            "model": self.model.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Pipeline":
        cfg = RunConfig.from_dict(d["config"])
        model = ModelBank.from_dict(d["model"]) if cfg.task == 1 else model_from_dict(d["model"])
        return cls(
            config=cfg,
            age_mode=d["age_mode"],
            encoding=EncodingMap.from_dict(d["encoding"]),
            kmeans=None if d["kmeans"] is None else KMeansModel.from_dict(d["kmeans"]),
            scaler=None if d["scaler"] is None else StandardScaler.from_dict(d["scaler"]),
            model=model,
            manifest_hash=d["manifest_hash"],
        )

    def save(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path) -> "Pipeline":
        return cls.from_dict(json.loads(Path(path).read_text()))
