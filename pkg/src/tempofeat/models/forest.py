"""Random forest of CART trees on bootstrap samples."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tree import DecisionTree, presort, tree_fit


@dataclass
class ForestModel:
    trees: list[DecisionTree]
    task: str = "regression"
    seed: int = 0

    def predict(self, X) -> np.ndarray:
        """Mean over trees. For classification each leaf holds the positive-class
        frequency of its bootstrap rows, so the mean is a score in [0, 1]."""
        X = np.asarray(X, dtype=np.float64)
        out = np.zeros(len(X))
        for t in self.trees:
            out += t.predict(X)
        return out / len(self.trees)

    def to_dict(self) -> dict:
        return {"kind": "forest", "task": self.task, "seed": self.seed,
                "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d: dict) -> "ForestModel":
        return cls([DecisionTree.from_dict(t) for t in d["trees"]], d["task"], d["seed"])


def forest_fit(X, y, n_trees: int = 100, seed: int = 0, max_depth: int | None = None,
               min_samples_leaf: int = 1, max_features="sqrt",
               task: str = "regression") -> ForestModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(X) == 0 or len(X) != len(y):
        raise ValueError("forest_fit needs non-empty data with len(X) == len(y)")
    n, d = X.shape
    if max_features == "sqrt":
        max_features = max(1, int(math.isqrt(d)))
    rng = np.random.default_rng(seed)
    order = presort(X)
    trees = []
    for _ in range(n_trees):
        # bootstrap as multiplicity weights so the presorted order is shared
        counts = np.bincount(rng.integers(0, n, n), minlength=n).astype(np.float64)
        tree_seed = int(rng.integers(2**63 - 1))
        trees.append(tree_fit(X, y, sample_weight=counts, max_depth=max_depth,
                              min_samples_leaf=min_samples_leaf, max_features=max_features,
                              seed=tree_seed, order=order))
    return ForestModel(trees, task, seed)
