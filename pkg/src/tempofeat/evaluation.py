"""Challenge metrics (cosine@5, ROC AUC) and the k-fold cross-validation harness."""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig
from .data import Dataset
from .models.bank import rank_top, visit_matrix

COSINE_VERSION = "cosine@5/v1: per-user mean, zero-truth users excluded, real-valued counts"


# ------------------------------------------------------------------ metrics


def _truth_dict(truth) -> dict[int, dict[int, float]]:
    if isinstance(truth, dict):
        return truth
    out: dict[int, dict[int, float]] = defaultdict(dict)
    for u, b, v in zip(truth["user_id"].to_numpy(), truth["branch_id"].to_numpy(),
                       truth["visits"].to_numpy(dtype=np.float64)):
        out[int(u)][int(b)] = float(v)
    return out


def cosine_top5(predictions, truth) -> float:
    """Mean per-user cosine between predicted top-5 and true visit vectors.

    ``predictions`` maps user_id to ``[(branch_id, visits), ...]``; ``truth`` is
    a visits table or a ``{user: {branch: visits}}`` dict. Users whose true
    vector is all zero are left out of the mean; a zero predicted vector
    scores 0.
    """
    truth = _truth_dict(truth)
    scores = []
    for user in sorted(predictions):
        t = {b: v for b, v in truth.get(user, {}).items() if v != 0}
        if not t:
            continue
        p = defaultdict(float)
        for b, v in predictions[user]:
            p[int(b)] += float(v)
        p_max = max(p.values(), default=0.0)
        if p_max <= 0:
            scores.append(0.0)
            continue
        # scale both vectors to a unit maximum so squares cannot under/overflow
        t_max = max(t.values())
        p = {b: v / p_max for b, v in p.items()}
        t = {b: v / t_max for b, v in t.items()}
        tt = math.fsum(v * v for v in t.values())
        pp = math.fsum(v * v for v in p.values())
        dot = math.fsum(v * t.get(b, 0.0) for b, v in p.items())
        # one square root of the product: identical vectors give exactly 1
        scores.append(min(1.0, dot / math.sqrt(pp * tt)))
    if not scores:
        raise ValueError("no evaluated user has a non-zero true visit vector")
    return math.fsum(scores) / len(scores)


def average_ranks(x) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    starts = np.flatnonzero(np.r_[True, xs[1:] != xs[:-1]])
    ends = np.r_[starts[1:], len(xs)]
    avg = (starts + ends + 1) / 2.0  # mean of ranks starts+1 .. ends
    ranks = np.empty(len(x))
    ranks[order] = np.repeat(avg, ends - starts)
    return ranks


def roc_auc(scores, labels) -> float:
    """Mann-Whitney AUC: P(random positive outranks random negative), ties count 1/2."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc_auc needs both positive and negative labels")
    r = average_ranks(scores)
    u = r[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


# ------------------------------------------------------------------- CV


@dataclass
class FoldSplit:
    k: int
    seed: int
    folds: list[np.ndarray]


def kfold_split(user_ids, k: int = 2, seed: int = 0) -> FoldSplit:
    """Seeded shuffle of the sorted user ids into ``k`` near-equal folds."""
    ids = np.sort(np.asarray(user_ids, dtype=np.int64))
    if k < 2 or k > len(ids):
        raise ValueError(f"k must lie in 2..{len(ids)}")
    perm = np.random.default_rng(seed).permutation(len(ids))
    return FoldSplit(k, seed, [np.sort(f) for f in np.array_split(ids[perm], k)])


@dataclass
class ScoreReport:
    task: int
    metric: str
    fold_values: list[float]
    mean: float
    config: dict = field(default_factory=dict)
    data_hash: str = ""
    fold_sizes: list[int] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"

    def save(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "ScoreReport":
        return cls(**json.loads(Path(path).read_text()))

    def table(self) -> str:
        cfg = self.config
        head = (f"task {self.task}  {self.metric}  model={cfg.get('model', '-')}  "
                f"features={cfg.get('feature_set', '-')}")
        lines = [head, f"{'fold':>6}  {'n':>7}  {'value':>9}"]
        sizes = self.fold_sizes or [0] * len(self.fold_values)
        for i, (n, v) in enumerate(zip(sizes, self.fold_values)):
            lines.append(f"{i:>6}  {n:>7}  {v:>9.5f}")
        lines.append(f"{'mean':>6}  {'':>7}  {self.mean:>9.5f}")
        return "\n".join(lines)


def _labels(ds: Dataset) -> np.ndarray:
    if not ds.has_labels:
        raise ValueError("task 2 needs a 'target' column in users.csv")
    return ds.users["target"].to_numpy()


def popularity_top5(train: Dataset, eval_user_ids) -> dict[int, list[tuple[int, float]]]:
    """Baseline: the 5 branches with most training visits, for every user."""
    branch_ids = train.branches["branch_id"].to_numpy()
    Y = visit_matrix(train.visits, train.user_ids, branch_ids)
    mean = Y.mean(axis=0, keepdims=True)
    top = rank_top(mean, branch_ids, 5)[0]
    return {int(u): top for u in eval_user_ids}


def kfold_cv(ds: Dataset, cfg: RunConfig, workers: int | None = None,
             baseline: str | None = None) -> ScoreReport:
    """k-fold CV; every fitted component is refit on the training folds only.

    ``baseline="popularity"`` scores the global-popularity top-5 for task 1.
    """
    from .pipeline import Pipeline

    split = kfold_split(ds.user_ids, cfg.cv_folds, cfg.seed)
    values, sizes = [], []
    for i, test_ids in enumerate(split.folds):
        train_ids = np.concatenate([f for j, f in enumerate(split.folds) if j != i])
        train, test = ds.subset(train_ids), ds.subset(test_ids)
        if cfg.task == 2:
            for name, part in (("training", train), ("held-out", test)):
                if len(np.unique(_labels(part))) < 2:
                    raise ValueError(f"fold {i}: {name} users hold a single task 2 class; "
                                     "use fewer folds, more users or another seed")
            pipe = Pipeline(cfg).fit(train, workers=workers)
            _, scores = pipe.predict_scores(test)
            values.append(roc_auc(scores, _labels(test)))
        else:
            if baseline == "popularity":
                preds = popularity_top5(train, test.user_ids)
            else:
                pipe = Pipeline(cfg).fit(train, workers=workers)
                uids, top = pipe.predict_top5(test, workers=workers)
                preds = dict(zip(uids.tolist(), top))
            values.append(cosine_top5(preds, test.visits))
        sizes.append(len(test_ids))
    config = cfg.fingerprint()
    if baseline:
        config["baseline"] = baseline
    metric = "auc" if cfg.task == 2 else "cosine@5"
    return ScoreReport(
        task=cfg.task,
        metric=metric,
        fold_values=[float(v) for v in values],
        mean=float(sum(values) / len(values)),
        config=config,
        data_hash=ds.fingerprint(),
        fold_sizes=sizes,
    )
