"""Command-line entry point: synth, featurize, train, predict, evaluate, cv, ensemble.

Configuration precedence: command-line flags > ``--config`` file > defaults.
``TEMPOFEAT_SEED`` supplies the seed when neither flags nor file set one.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np

from .config import MODELS, ConfigError, RunConfig, load_config_file
from .features import FEATURE_SETS

log = logging.getLogger("tempofeat")

RUN_FLAGS = {
    # flag dest -> RunConfig field
    "data_dir": "data_dir", "out": "out", "feature_set": "feature_set", "model": "model",
    "task": "task", "k": "k", "seed": "seed", "workers": "workers", "cv_folds": "cv_folds",
    "normalize_targets": "normalize_targets", "log_transform": "log_transform",
    "scale_features": "scale_features", "n_estimators": "n_estimators",
    "learning_rate": "learning_rate", "max_depth": "max_depth",
    "min_samples_leaf": "min_samples_leaf", "l2_lambda": "l2_lambda", "weighting": "weighting",
    "drop_columns": "drop_columns", "stack_ridge": "stack_ridge",
}


def _run_parent() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="YAML/JSON file mirroring RunConfig")
    p.add_argument("--data-dir")
    p.add_argument("--out")
    p.add_argument("--feature-set", choices=FEATURE_SETS)
    p.add_argument("--model", choices=MODELS)
    p.add_argument("--task", type=int, choices=(1, 2))
    p.add_argument("--k", type=int, help="k-means clusters for FS8 (default 10)")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--cv-folds", type=int)
    p.add_argument("--normalize-targets", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--log-transform", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--scale-features", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--n-estimators", type=int, help="default 100")
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--max-depth", type=int)
    p.add_argument("--min-samples-leaf", type=int)
    p.add_argument("--l2-lambda", type=float)
    p.add_argument("--weighting", choices=("uniform", "recency"))
    p.add_argument("--drop-columns", nargs="+", metavar="GLOB")
    p.add_argument("--stack-ridge", action=argparse.BooleanOptionalAction, default=None)
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tempofeat", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    run = _run_parent()

    s = sub.add_parser("synth", help="generate a synthetic dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--n-users", type=int, default=5000)
    s.add_argument("--n-branches", type=int, default=40)
    s.add_argument("--k-true", type=int, default=8)
    s.add_argument("--missing-rate", type=float, default=0.01)
    s.add_argument("--seed", type=int)
    s.add_argument("--full-scale", action="store_true",
                   help="191,238 users and 323 branches")

    sub.add_parser("featurize", parents=[run], help="write the feature matrix and manifest")
    sub.add_parser("train", parents=[run], help="fit a pipeline and save model.json")
    sub.add_parser("cv", parents=[run], help="k-fold cross-validation report").add_argument(
        "--baseline", choices=("popularity",), help="task 1 global-popularity baseline")

    p = sub.add_parser("predict", help="write a submission file")
    p.add_argument("--model-file", "--model", dest="model_file", required=True)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)

    e = sub.add_parser("evaluate", help="score a submission against truth")
    e.add_argument("--data-dir", required=True)
    e.add_argument("--predictions", required=True)
    e.add_argument("--out")

    en = sub.add_parser("ensemble", help="unweighted mean of submission files")
    en.add_argument("files", nargs="+")
    en.add_argument("--out", required=True)
    return parser


def resolve_config(args) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        values.update(load_config_file(args.config))
    for dest, name in RUN_FLAGS.items():
        v = getattr(args, dest, None)
        if v is not None:
            values[name] = v
    if "seed" not in values and os.environ.get("TEMPOFEAT_SEED"):
        try:
            values["seed"] = int(os.environ["TEMPOFEAT_SEED"])
        except ValueError:
            raise ConfigError("TEMPOFEAT_SEED must be an integer") from None
    try:
        return RunConfig.from_dict(values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def _write_config(cfg: RunConfig, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")


# ------------------------------------------------------------ submissions


def write_task1_submission(path, user_ids, top) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user_id", "top1", "top2", "top3", "top4", "top5"])
        for u, pairs in zip(user_ids, top):
            cells = [f"{b}:{v!r}" for b, v in pairs]
            w.writerow([int(u)] + cells + [""] * (5 - len(cells)))


def write_task2_submission(path, user_ids, scores) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user_id", "score"])
        for u, s in zip(user_ids, scores):
            w.writerow([int(u), repr(float(s))])


def read_submission(path):
    """Returns (task, {user_id: value}); task 1 values are [(branch, visits)]."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty submission")
    header, body = rows[0], rows[1:]
    if header == ["user_id", "score"]:
        return 2, {int(r[0]): float(r[1]) for r in body}
    if header and header[0] == "user_id" and len(header) == 6:
        out = {}
        for r in body:
            pairs = []
            for cell in r[1:]:
                if cell:
                    b, v = cell.split(":")
                    pairs.append((int(b), float(v)))
            out[int(r[0])] = pairs
        return 1, out
    raise ValueError(f"{path}: unrecognised submission header {header}")


# ---------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    from .datagen import GenConfig, generate

    seed = args.seed
    if seed is None:
        seed = int(os.environ.get("TEMPOFEAT_SEED", 0))
    kw = dict(k_true=args.k_true, missing_rate=args.missing_rate, seed=seed)
    cfg = (GenConfig.full_scale(**kw) if args.full_scale
           else GenConfig(n_users=args.n_users, n_branches=args.n_branches, **kw))
    generate(cfg, args.out)
    print(f"synth: {cfg.n_users} users, {cfg.n_branches} branches -> {args.out}")
    return 0


def cmd_featurize(cfg: RunConfig) -> int:
    from .data import load_dataset
    from .pipeline import Pipeline, fit_feature_state

    ds = load_dataset(cfg.data_dir)
    pipe = Pipeline(cfg)
    pipe.age_mode, pipe.encoding, pipe.kmeans = fit_feature_state(ds, cfg)
    fm = pipe.featurize(ds, fit_scaler=True)
    out = Path(cfg.out)
    fm.save(out)
    (out / "encoding.json").write_text(json.dumps(pipe.encoding.to_dict(), indent=2) + "\n")
    if pipe.kmeans is not None:
        pipe.kmeans.save(out / "kmeans.json")
    _write_config(cfg, out)
    print(f"featurize: {fm.shape[0]} users x {fm.shape[1]} columns ({cfg.feature_set}) "
          f"-> {out / 'features.csv'}")
    return 0


def cmd_train(cfg: RunConfig) -> int:
    from .data import load_dataset
    from .pipeline import Pipeline

    ds = load_dataset(cfg.data_dir)
    pipe = Pipeline(cfg).fit(ds)
    out = Path(cfg.out)
    pipe.save(out / "model.json")
    _write_config(cfg, out)
    print(f"train: task {cfg.task} {cfg.model} on {cfg.feature_set}, "
          f"{len(ds.users)} users -> {out / 'model.json'}")
    return 0


def cmd_predict(args) -> int:
    from .data import load_dataset
    from .pipeline import Pipeline

    pipe = Pipeline.load(args.model_file)
    ds = load_dataset(args.data_dir)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    if pipe.config.task == 1:
        uids, top = pipe.predict_top5(ds, workers=args.workers)
        write_task1_submission(args.out, uids, top)
    else:
        uids, scores = pipe.predict_scores(ds)
        write_task2_submission(args.out, uids, scores)
    sidecar = Path(args.out).with_suffix(".config.json")
    sidecar.write_text(json.dumps(pipe.config.to_dict(), indent=2, sort_keys=True) + "\n")
    print(f"predict: {len(uids)} users -> {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    from .data import load_dataset
    from .evaluation import ScoreReport, cosine_top5, roc_auc

    ds = load_dataset(args.data_dir)
    task, preds = read_submission(args.predictions)
    if task == 1:
        value = cosine_top5(preds, ds.visits)
        metric = "cosine@5"
    else:
        labels = dict(zip(ds.users["user_id"].tolist(), ds.users["target"].tolist()))
        uids = sorted(preds)
        value = roc_auc([preds[u] for u in uids], [labels[u] for u in uids])
        metric = "auc"
    report = ScoreReport(task, metric, [value], value,
                         {"predictions": Path(args.predictions).name}, ds.fingerprint(),
                         [len(preds)])
    out = Path(args.out) if args.out else Path(args.predictions).with_suffix(".report.json")
    report.save(out)
    print(report.table())
    print(f"evaluate: {metric} = {value:.5f}; report -> {out}")
    return 0


def cmd_cv(cfg: RunConfig, baseline=None) -> int:
    from .data import load_dataset
    from .evaluation import kfold_cv

    ds = load_dataset(cfg.data_dir)
    report = kfold_cv(ds, cfg, baseline=baseline)
    out = Path(cfg.out)
    path = out / "score_report.json"
    report.save(path)
    _write_config(cfg, out)
    print(report.table())
    print(f"cv: {cfg.cv_folds}-fold {report.metric} mean {report.mean:.5f}; report -> {path}")
    return 0


def cmd_ensemble(args) -> int:
    from .models.bank import ensemble_mean, rank_top

    subs = [read_submission(f) for f in args.files]
    tasks = {t for t, _ in subs}
    if len(tasks) != 1:
        raise ValueError("cannot ensemble task 1 and task 2 submissions together")
    users = sorted(subs[0][1])
    for f, (_, s) in zip(args.files, subs):
        if sorted(s) != users:
            raise ValueError(f"{f}: user set differs from {args.files[0]}")
    if tasks == {2}:
        mean = ensemble_mean([[s[u] for u in users] for _, s in subs])
        write_task2_submission(args.out, users, mean)
    else:
        branches = sorted({b for _, s in subs for pairs in s.values() for b, _ in pairs})
        col = {b: j for j, b in enumerate(branches)}
        mats = []
        for _, s in subs:
            M = np.zeros((len(users), len(branches)))
            for i, u in enumerate(users):
                for b, v in s[u]:
                    M[i, col[b]] = v
            mats.append(M)
        mean = np.mean(np.stack(mats), axis=0)
        write_task1_submission(args.out, users, rank_top(mean, branches, 5))
    print(f"ensemble: mean of {len(subs)} submissions, {len(users)} users -> {args.out}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command in ("featurize", "train", "cv"):
            cfg = resolve_config(args)
            if args.command == "featurize":
                return cmd_featurize(cfg)
            if args.command == "train":
                return cmd_train(cfg)
            return cmd_cv(cfg, baseline=args.baseline)
        handler = {"synth": cmd_synth, "predict": cmd_predict,
                   "evaluate": cmd_evaluate, "ensemble": cmd_ensemble}[args.command]
        return handler(args)
    except ConfigError as exc:
        parser.print_usage(sys.stderr)
        print(f"tempofeat: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - reported as a diagnostic
        log.debug("failure", exc_info=True)
        print(f"tempofeat: {args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
