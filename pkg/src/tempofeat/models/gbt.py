"""Gradient-boosted regression trees for squared and logistic loss."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tree import DecisionTree, presort, tree_fit


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class GbtModel:
    init_value: float
    trees: list[DecisionTree]
    learning_rate: float = 0.1
    n_estimators: int = 100
    loss: str = "squared"
    max_depth: int = 3
    min_samples_leaf: int = 1
    train_loss: list[float] = field(default_factory=list)

    def decision_function(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        out = np.full(len(X), self.init_value)
        for t in self.trees:
            out += self.learning_rate * t.predict(X)
        return out

    def predict(self, X) -> np.ndarray:
        """Regression values, or positive-class probabilities for logistic loss."""
        raw = self.decision_function(X)
        return _sigmoid(raw) if self.loss == "logistic" else raw

    def to_dict(self) -> dict:
        return {
            "kind": "gbt",
            "init_value": self.init_value,
            "learning_rate": self.learning_rate,
            "n_estimators": self.n_estimators,
            "loss": self.loss,
            "max_depth": self.max_depth,
            "min_samples_leaf": self.min_samples_leaf,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GbtModel":
        return cls(
            init_value=d["init_value"],
            trees=[DecisionTree.from_dict(t) for t in d["trees"]],
            learning_rate=d["learning_rate"],
            n_estimators=d["n_estimators"],
            loss=d["loss"],
            max_depth=d["max_depth"],
            min_samples_leaf=d["min_samples_leaf"],
        )


def gbt_fit(X, y, n_estimators: int = 100, learning_rate: float = 0.1, max_depth: int = 3,
            min_samples_leaf: int = 1, loss: str = "squared", order=None) -> GbtModel:
    """Stagewise boosting on the negative gradient.

    Squared loss fits each tree to the residuals ``y - F``. Logistic loss fits
    the tree structure to ``y - p`` and then sets every leaf to the one-step
    Newton value ``sum(y - p) / sum(p (1 - p))``. ``train_loss`` records the
    training loss (MSE or mean log-loss) after the initial value and after
    every stage.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(X) < 2 or len(X) != len(y):
        raise ValueError("gbt_fit needs at least two rows and len(X) == len(y)")
    if not 0 <= learning_rate <= 1:
        raise ValueError("learning_rate must lie in [0, 1]")
    if loss == "squared":
        init = float(y.mean())
    elif loss == "logistic":
        if not np.isin(y, (0.0, 1.0)).all():
            raise ValueError("logistic loss needs 0/1 targets")
        p = y.mean()
        if p in (0.0, 1.0):
            raise ValueError("logistic loss needs both classes in the training targets")
        init = math.log(p / (1 - p))
    else:
        raise ValueError(f"unknown loss {loss!r}")

    model = GbtModel(init, [], learning_rate, n_estimators, loss, max_depth, min_samples_leaf)
    F = np.full(len(y), init)
    model.train_loss.append(_loss(loss, y, F))
    if learning_rate == 0:
        return model
    if order is None:
        order = presort(X)
    for _ in range(n_estimators):
        if loss == "squared":
            resid = y - F
            tree = tree_fit(X, resid, max_depth=max_depth,
                            min_samples_leaf=min_samples_leaf, order=order)
            step = tree.predict(X)
        else:
            p = _sigmoid(F)
            resid = y - p
            tree = tree_fit(X, resid, max_depth=max_depth,
                            min_samples_leaf=min_samples_leaf, order=order)
            leaf = tree.apply(X)
            num = np.bincount(leaf, weights=resid, minlength=tree.n_nodes)
            den = np.bincount(leaf, weights=p * (1 - p), minlength=tree.n_nodes)
            is_leaf = tree.feature < 0
            tree.value = np.where(is_leaf, num / np.maximum(den, 1e-12), tree.value)
            step = tree.value[leaf]
        F = F + learning_rate * step
        model.trees.append(tree)
        model.train_loss.append(_loss(loss, y, F))
    return model


def _loss(loss, y, F):
    if loss == "squared":
        r = y - F
        return float(np.dot(r, r) / len(r))
    # mean log-loss, stable form
    return float(np.mean(np.logaddexp(0.0, F) - y * F))


def gbt_predict(model: GbtModel, X) -> np.ndarray:
    return model.predict(X)
