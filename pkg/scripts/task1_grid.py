"""Task 1 grid: cosine@5 by feature set and model under 2-fold CV.

Generates a synthetic dataset unless --data-dir is given, then prints one row
per feature set (plus FS10 with per-branch target normalization) and the
popularity baseline. Results are also written as CSV.

    python scripts/task1_grid.py --n-users 5000 --models gbt ridge
"""

import argparse
import csv
import logging
import tempfile
import time

from tempofeat.config import RunConfig
from tempofeat.data import load_dataset
from tempofeat.datagen import GenConfig, generate
from tempofeat.evaluation import kfold_cv
from tempofeat.features import FEATURE_SETS


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--data-dir")
    ap.add_argument("--n-users", type=int, default=5000)
    ap.add_argument("--n-branches", type=int, default=40)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--models", nargs="+", default=["gbt", "forest", "ridge"])
    ap.add_argument("--sets", nargs="+", default=list(FEATURE_SETS))
    ap.add_argument("--n-estimators", type=int, default=100)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--csv", default="task1_grid.csv")
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING)

    data_dir = args.data_dir
    if data_dir is None:
        data_dir = tempfile.mkdtemp(prefix="task1_")
        generate(GenConfig(n_users=args.n_users, n_branches=args.n_branches, seed=args.seed),
                 data_dir)
    ds = load_dataset(data_dir)

    rows = [(fs, False) for fs in args.sets]
    if "FS10" in args.sets:
        rows.append(("FS10", True))
    results = []
    base = kfold_cv(ds, RunConfig(task=1, model="ridge", feature_set="FS1"),
                    baseline="popularity")
    print(f"{'feature set':<16}" + "".join(f"{m:>10}" for m in args.models))
    for fs, norm in rows:
        label = fs + (" + normal." if norm else "")
        line = f"{label:<16}"
        for model in args.models:
            cfg = RunConfig(task=1, model=model, feature_set=fs, normalize_targets=norm,
                            n_estimators=args.n_estimators)
            t0 = time.perf_counter()
            rep = kfold_cv(ds, cfg, workers=args.workers)
            results.append((label, model, rep.mean, time.perf_counter() - t0))
            line += f"{rep.mean:>10.5f}"
        print(line, flush=True)
    print(f"{'popularity':<16}{base.mean:>10.5f}")

    with open(args.csv, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["feature_set", "model", "cosine5", "seconds"])
        w.writerows(results)
        w.writerow(["popularity", "-", base.mean, 0.0])


if __name__ == "__main__":
    main()
