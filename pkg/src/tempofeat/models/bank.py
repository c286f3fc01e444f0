"""One regressor per branch, top-5 branch selection and unweighted ensembling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed

from .learners import fit_learner, model_from_dict
from .linear import LinearModel, ridge_fit
from .tree import presort


@dataclass
class TargetScaler:
    """Per-branch division by the training maximum (0 means the branch was never visited)."""

    maxima: np.ndarray

    @classmethod
    def fit(cls, Y) -> "TargetScaler":
        return cls(np.asarray(Y, dtype=np.float64).max(axis=0))

    def _div(self):
        return np.where(self.maxima > 0, self.maxima, 1.0)

    def normalize(self, Y) -> np.ndarray:
        return np.asarray(Y, dtype=np.float64) / self._div()

    def denormalize(self, Y) -> np.ndarray:
        return np.asarray(Y, dtype=np.float64) * self._div()


def visit_matrix(visits, user_ids, branch_ids) -> np.ndarray:
    """Dense users x branches visit counts, 0 where no row exists."""
    Y = np.zeros((len(user_ids), len(branch_ids)))
    if visits is None or len(visits) == 0:
        return Y
    u = visits["user_id"].to_numpy()
    b = visits["branch_id"].to_numpy()
    keep = np.isin(u, user_ids) & np.isin(b, branch_ids)
    r = np.searchsorted(user_ids, u[keep])
    col = {int(v): j for j, v in enumerate(branch_ids)}
    c = np.array([col[int(v)] for v in b[keep]], dtype=np.int64)
    Y[r, c] = visits["visits"].to_numpy(dtype=np.float64)[keep]
    return Y


@dataclass
class ModelBank:
    branch_ids: np.ndarray
    branch_geo: np.ndarray
    regressors: list
    scaler: TargetScaler | None
    feature_set: str
    stackers: list[LinearModel] | None = None

    @property
    def n_branches(self) -> int:
        return len(self.regressors)

    def predict_matrix(self, fm, workers: int = 1) -> np.ndarray:
        """Raw (denormalised, unclipped) predictions, users x branches."""
        jobs = (delayed(_predict_branch)(m, fm.with_branch(g))
                for m, g in zip(self.regressors, self.branch_geo))
        if workers > 1:
            cols = Parallel(n_jobs=workers, backend="loky")(jobs)
        else:
            cols = [f(*a, **kw) for f, a, kw in jobs]
        P = np.column_stack(cols)
        if self.stackers is not None:
            P = np.column_stack([s.predict(P) for s in self.stackers])
        if self.scaler is not None:
            P = self.scaler.denormalize(P)
        return P

    def to_dict(self) -> dict:
        return {
            "branch_ids": self.branch_ids.tolist(),
            "branch_geo": self.branch_geo.tolist(),
            "regressors": [m.to_dict() for m in self.regressors],
            "scaler": None if self.scaler is None else self.scaler.maxima.tolist(),
            "feature_set": self.feature_set,
            "stackers": None if self.stackers is None else [s.to_dict() for s in self.stackers],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelBank":
        return cls(
            branch_ids=np.asarray(d["branch_ids"], dtype=np.int64),
            branch_geo=np.asarray(d["branch_geo"], dtype=np.float64),
            regressors=[model_from_dict(m) for m in d["regressors"]],
            scaler=None if d["scaler"] is None else TargetScaler(np.asarray(d["scaler"])),
            feature_set=d["feature_set"],
            stackers=None if d["stackers"] is None
            else [LinearModel.from_dict(s) for s in d["stackers"]],
        )


def _predict_branch(model, X):
    return model.predict(X)


def _fit_branch(cfg, X, y, seed, base_order):
    order = None
    if cfg.model == "gbt" and base_order is not None:
        extra = X.shape[1] - base_order.shape[0]
        order = base_order if extra == 0 else np.vstack([base_order, presort(X[:, -extra:])])
    return fit_learner(cfg, X, y, classification=False, seed=seed, order=order)


def train_branch_bank(fm, visits, branches, cfg, normalize_targets: bool = False,
                      workers: int = 1) -> ModelBank:
    """Train one regressor per branch on that branch's visit counts.

    ``fm`` is the user feature matrix; FS9/FS10 distance columns for each
    branch are appended before fitting. Branch ``b`` uses seed
    ``cfg.seed ^ branch_id`` so results do not depend on ``workers``.
    """
    if visits is None:
        raise ValueError("branch bank training needs visit targets (visits.csv)")
    branch_ids = branches["branch_id"].to_numpy().astype(np.int64)
    branch_geo = branches[["geo_x", "geo_y"]].to_numpy(dtype=np.float64)
    Y = visit_matrix(visits, fm.user_ids, branch_ids)
    scaler = TargetScaler.fit(Y) if normalize_targets else None
    Yt = scaler.normalize(Y) if scaler is not None else Y
    base_order = presort(fm.values) if cfg.model == "gbt" else None

    jobs = (delayed(_fit_branch)(cfg, fm.with_branch(branch_geo[j]), Yt[:, j],
                                 int(cfg.seed) ^ int(b), base_order)
            for j, b in enumerate(branch_ids))
    if workers > 1:
        regressors = Parallel(n_jobs=workers, backend="loky")(jobs)
    else:
        regressors = [f(*a, **kw) for f, a, kw in jobs]
    bank = ModelBank(branch_ids, branch_geo, regressors, scaler, cfg.feature_set)

    if cfg.stack_ridge:
        # ridge per branch over the whole vector of bank outputs (in-sample)
        P = np.column_stack([_predict_branch(m, fm.with_branch(g))
                             for m, g in zip(regressors, branch_geo)])
        bank.stackers = [ridge_fit(P, Yt[:, j], lam=cfg.stack_lambda)
                         for j in range(len(branch_ids))]
    return bank


def rank_top(P, branch_ids, k: int = 5) -> list[list[tuple[int, float]]]:
    """Top ``k`` (branch_id, value) per row after clipping negatives to 0.

    Descending by value, ties by ascending branch id.
    """
    P = np.maximum(np.asarray(P, dtype=np.float64), 0.0)
    branch_ids = np.asarray(branch_ids)
    by_id = np.argsort(branch_ids, kind="stable")
    P = P[:, by_id]
    ids = branch_ids[by_id]
    k = min(k, P.shape[1])
    order = np.argsort(-P, axis=1, kind="stable")[:, :k]
    vals = np.take_along_axis(P, order, axis=1)
    return [[(int(ids[o]), float(v)) for o, v in zip(orow, vrow)]
            for orow, vrow in zip(order, vals)]


def predict_top5(bank: ModelBank, fm, workers: int = 1) -> list[list[tuple[int, float]]]:
    return rank_top(bank.predict_matrix(fm, workers=workers), bank.branch_ids, 5)


def ensemble_mean(score_lists) -> np.ndarray:
    """Element-wise unweighted mean of equally long score lists."""
    lists = [np.asarray(s, dtype=np.float64) for s in score_lists]
    if not lists:
        raise ValueError("ensemble_mean needs at least one score list")
    if len({len(s) for s in lists}) != 1:
        raise ValueError("score lists differ in length")
    return np.mean(np.vstack(lists), axis=0)
