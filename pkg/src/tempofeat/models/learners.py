"""Uniform fit/load entry points over the individual learners."""

from __future__ import annotations

from .forest import ForestModel, forest_fit
from .gbt import GbtModel, gbt_fit
from .linear import LinearModel, logistic_fit, ridge_fit


def fit_learner(cfg, X, y, *, classification: bool, seed: int = 0, order=None):
    """Fit the learner named by ``cfg.model``; ``cfg`` is a RunConfig."""
    if cfg.model == "gbt":
        return gbt_fit(X, y, n_estimators=cfg.n_estimators, learning_rate=cfg.learning_rate,
                       max_depth=3 if cfg.max_depth is None else cfg.max_depth,
                       min_samples_leaf=cfg.min_samples_leaf,
                       loss="logistic" if classification else "squared", order=order)
    if cfg.model == "forest":
        return forest_fit(X, y, n_trees=cfg.n_estimators, seed=seed, max_depth=cfg.max_depth,
                          min_samples_leaf=cfg.min_samples_leaf,
                          task="classification" if classification else "regression")
    if cfg.model == "ridge":
        return ridge_fit(X, y, lam=cfg.l2_lambda)
    if cfg.model == "logistic":
        if not classification:
            raise ValueError("logistic regression is a classifier")
        return logistic_fit(X, y, l2_lambda=cfg.l2_lambda, max_iter=cfg.max_iter)
    raise ValueError(f"unknown model {cfg.model!r}")


def model_from_dict(d: dict):
    kind = d["kind"]
    if kind == "gbt":
        return GbtModel.from_dict(d)
    if kind == "forest":
        return ForestModel.from_dict(d)
    if kind in ("ridge", "logistic"):
        return LinearModel.from_dict(d)
    raise ValueError(f"unknown model kind {kind!r}")
