"""Unweighted four-model ensemble for task 2, scored per CV fold.

Members:
  1. logistic regression on FS8 with feature scaling
  2. GBT on FS1
  3. GBT on FS8 without the home coordinates
  4. GBT on FS8 without the c*/w* product-holding flags

Each member is fit on the training fold; the ensemble is the plain mean of
the four held-out score vectors.
"""

import argparse
import logging
import tempfile

import numpy as np

from tempofeat.config import RunConfig
from tempofeat.data import load_dataset
from tempofeat.datagen import GenConfig, generate
from tempofeat.evaluation import kfold_split, roc_auc
from tempofeat.models import ensemble_mean
from tempofeat.pipeline import Pipeline

MEMBERS = {
    "LR FS8 scaled": RunConfig(task=2, model="logistic", feature_set="FS8",
                               scale_features=True),
    "GBT FS1": RunConfig(task=2, model="gbt", feature_set="FS1"),
    "GBT FS8 -geo": RunConfig(task=2, model="gbt", feature_set="FS8",
                              drop_columns=("geo_x", "geo_y")),
    "GBT FS8 -c/w": RunConfig(task=2, model="gbt", feature_set="FS8",
                              drop_columns=("c?", "w?")),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--data-dir")
    ap.add_argument("--n-users", type=int, default=20_000)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING)

    data_dir = args.data_dir
    if data_dir is None:
        data_dir = tempfile.mkdtemp(prefix="ens_")
        generate(GenConfig(n_users=args.n_users, n_branches=10, seed=args.seed), data_dir)
    ds = load_dataset(data_dir)

    scores = {name: [] for name in [*MEMBERS, "ensemble"]}
    for fold in kfold_split(ds.user_ids, 2, seed=0).folds:
        test = ds.subset(fold)
        train = ds.subset(np.setdiff1d(ds.user_ids, fold))
        y = test.users["target"].to_numpy()
        member_scores = []
        for name, cfg in MEMBERS.items():
            s = Pipeline(cfg).fit(train).predict_scores(test)[1]
            scores[name].append(roc_auc(s, y))
            member_scores.append(s)
        scores["ensemble"].append(roc_auc(ensemble_mean(member_scores), y))

    for name, vals in scores.items():
        folds = "  ".join(f"{v:.5f}" for v in vals)
        print(f"{name:<16}{np.mean(vals):.5f}   ({folds})")


if __name__ == "__main__":
    main()
