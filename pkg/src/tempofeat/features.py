"""Per-user fixed-length features over activity timelines (feature sets FS1..FS10).

Each feature set extends the previous one, so an FSk row is a prefix of the
FS(k+1) row. FS9 and FS10 depend on the branch being predicted and are only
materialised inside the branch bank (see :meth:`FeatureMatrix.with_branch`).

The per-user functions (``fs3_counters``, ``clumpiness`` ...) are the
reference definitions; :func:`assemble` computes the same quantities for all
users at once with grouped numpy operations.
"""

from __future__ import annotations

import fnmatch
import hashlib
import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from .data import (
    ACTIVITY_CATEGORICAL,
    AMT_ORDINAL,
    CC_COLUMNS,
    MC_ORDINAL,
    N_DAYS,
    WEALTH_COLUMNS,
    ActivityEvent,
    Dataset,
    EncodingMap,
    UserProfile,
    encode_activities,
    event_manifest,
    one_hot,
)

log = logging.getLogger(__name__)

FEATURE_SETS = tuple(f"FS{i}" for i in range(1, 11))
BRANCH_SETS = ("FS9", "FS10")

FS3_NAMES = (
    "n_pos", "n_web", "n_credit", "n_debit", "n_distinct_amt", "max_amt",
    "days_since_last", "n_distinct_locations", "n_distinct_time_slots",
    "n_distinct_mc", "n_total", "mode_time_slot", "mode_loc_cat",
    "months_credit_card", "months_wealthy",
)


def fs_index(feature_set: str) -> int:
    if feature_set not in FEATURE_SETS:
        raise ValueError(f"unknown feature set {feature_set!r}; expected FS1..FS10")
    return int(feature_set[2:])


# ------------------------------------------------------------------ types


@dataclass(frozen=True)
class ActivityTimeline:
    user_id: int
    event_days: tuple[int, ...]
    horizon: int = N_DAYS

    def __post_init__(self):
        days = tuple(sorted(int(d) for d in self.event_days))
        if days and (days[0] < 1 or days[-1] > self.horizon):
            raise ValueError(f"day index outside 1..{self.horizon}")
        object.__setattr__(self, "event_days", days)

    @property
    def distinct_days(self) -> tuple[int, ...]:
        return tuple(sorted(set(self.event_days)))

    @property
    def n(self) -> int:
        return len(self.event_days)


@dataclass(frozen=True)
class CounterSet:
    n_pos: int = 0
    n_web: int = 0
    n_credit: int = 0
    n_debit: int = 0
    n_distinct_amt: int = 0
    max_amt: int = 0
    days_since_last: int = 0
    n_distinct_locations: int = 0
    n_distinct_time_slots: int = 0
    n_distinct_mc: int = 0
    n_total: int = 0
    mode_time_slot: int = 0
    mode_loc_cat: int = 0
    months_credit_card: int = 0
    months_wealthy: int = 0

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in FS3_NAMES], dtype=np.float64)


@dataclass(frozen=True)
class Column:
    name: str
    feature_set: str
    kind: str  # "indicator" | "numeric"


@dataclass(frozen=True)
class FeatureMatrix:
    """Dense per-user features plus the column manifest.

    ``home_geo`` and ``act_geo`` are kept so the branch-parameterised FS9/FS10
    columns can be computed per branch without a users x branches matrix.
    """

    user_ids: np.ndarray
    values: np.ndarray
    columns: tuple[Column, ...]
    home_geo: np.ndarray
    act_geo: np.ndarray
    branch_sets: tuple[str, ...] = ()

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def shape(self):
        return self.values.shape

    def manifest(self) -> dict:
        cols = [{"name": c.name, "feature_set": c.feature_set, "type": c.kind}
                for c in self.columns]
        cols += [{"name": n, "feature_set": fs, "type": "numeric", "branch_parameterized": True}
                 for fs, n in zip(BRANCH_SETS, BRANCH_COLUMN_NAMES) if fs in self.branch_sets]
        return {"columns": cols}

    def manifest_hash(self) -> str:
        blob = json.dumps(self.manifest(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def with_values(self, values, columns=None) -> "FeatureMatrix":
        return replace(self, values=values, columns=self.columns if columns is None else columns)

    def rows(self, index) -> "FeatureMatrix":
        return replace(self, user_ids=self.user_ids[index], values=self.values[index],
                       home_geo=self.home_geo[index], act_geo=self.act_geo[index])

    def drop(self, patterns) -> "FeatureMatrix":
        """Drop columns whose name matches any of the glob ``patterns``."""
        keep = [i for i, c in enumerate(self.columns)
                if not any(fnmatch.fnmatchcase(c.name, p) for p in patterns)]
        return self.with_values(self.values[:, keep], tuple(self.columns[i] for i in keep))

    def with_branch(self, branch_geo) -> np.ndarray:
        """Values with the FS9/FS10 columns for one branch appended."""
        extra = []
        b = np.asarray(branch_geo, dtype=np.float64)
        if "FS9" in self.branch_sets:
            extra.append(np.hypot(*(self.home_geo - b).T))
        if "FS10" in self.branch_sets:
            extra.append(np.hypot(*(self.act_geo - b).T))
        if not extra:
            return self.values
        return np.column_stack([self.values] + extra)

    def save(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        df = pd.DataFrame(self.values, columns=self.names)
        df.insert(0, "user_id", self.user_ids)
        df.to_csv(out / "features.csv", index=False, float_format="%.17g")
        manifest = self.manifest()
        manifest["hash"] = self.manifest_hash()
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


BRANCH_COLUMN_NAMES = ("branch_dist_home", "branch_dist_act")


# ------------------------------------------------------- per-user features


def fs1_mean_activity(vectors) -> np.ndarray:
    """Unweighted mean of encoded activity vectors, zeros when there are none.

    ``vectors`` is an ``(m, L)`` array; an empty ``(0, L)`` array gives ``L`` zeros.
    """
    v = np.asarray(vectors, dtype=np.float64)
    if v.shape[0] == 0:
        return np.zeros(v.shape[1])
    return v.mean(axis=0)


def recency_weighted_mean(vectors, days) -> np.ndarray:
    """Mean with weights ``ln(1 + day_index)``, normalised to sum to one."""
    v = np.asarray(vectors, dtype=np.float64)
    if v.shape[0] == 0:
        return np.zeros(v.shape[1])
    w = np.log1p(np.asarray(days, dtype=np.float64))
    return (w[:, None] * v).sum(axis=0) / w.sum()


def min_branch_distance(point, branches) -> float:
    geo = _branch_array(branches)
    if len(geo) == 0:
        raise ValueError("min_branch_distance needs at least one branch")
    p = np.asarray(point, dtype=np.float64)
    return float(np.hypot(geo[:, 0] - p[0], geo[:, 1] - p[1]).min())


def _branch_array(branches) -> np.ndarray:
    if isinstance(branches, pd.DataFrame):
        return branches[["geo_x", "geo_y"]].to_numpy(dtype=np.float64)
    if len(branches) and hasattr(branches[0], "geo"):
        return np.array([b.geo for b in branches], dtype=np.float64)
    return np.asarray(branches, dtype=np.float64).reshape(-1, 2)


def _mode_code(codes) -> int:
    if not codes:
        return 0
    counts = Counter(codes)
    best = max(counts.values())
    return min(c for c, n in counts.items() if n == best)


def fs3_counters(user: UserProfile, events: list[ActivityEvent],
                 encoding: EncodingMap, horizon: int = N_DAYS) -> CounterSet:
    """Activity counters. Anything not POS counts as web, anything not credit as debit."""
    months_cc = int(sum(user.cc_months))
    months_w = int(sum(user.wealth_months))
    if not events:
        return CounterSet(months_credit_card=months_cc, months_wealthy=months_w)
    n = len(events)
    n_pos = sum(e.channel == "pos" for e in events)
    n_credit = sum(e.card == "credit" for e in events)
    return CounterSet(
        n_pos=n_pos,
        n_web=n - n_pos,
        n_credit=n_credit,
        n_debit=n - n_credit,
        n_distinct_amt=len({e.amt_cat for e in events}),
        max_amt=max(AMT_ORDINAL.get(e.amt_cat, 0) for e in events),
        days_since_last=horizon - max(e.day_index for e in events),
        n_distinct_locations=len({e.loc_cat for e in events}),
        n_distinct_time_slots=len({e.time_slot for e in events}),
        n_distinct_mc=len({e.mc_cat for e in events}),
        n_total=n,
        mode_time_slot=_mode_code(
            [encoding.code("activities.time_slot", e.time_slot) for e in events]),
        mode_loc_cat=_mode_code(
            [encoding.code("activities.loc_cat", e.loc_cat) for e in events]),
        months_credit_card=months_cc,
        months_wealthy=months_w,
    )


def inter_activity_stats(timeline: ActivityTimeline) -> tuple[float, float]:
    """Mean and population std of gaps between consecutive distinct activity days."""
    days = timeline.distinct_days
    if len(days) < 2:
        return 0.0, 0.0
    gaps = np.diff(np.asarray(days, dtype=np.float64))
    return float(gaps.mean()), float(gaps.std())


def clumpiness(timeline: ActivityTimeline) -> float:
    """Entropy-based clumpiness of the distinct activity days, in [0, 1).

    The window 1..N is cut at every activity day, with boundaries at 0 and
    N + 1. Gaps are normalised by N + 1 so they sum to one, and

        C = 1 + sum(x * ln x) / ln(N + 1)

    Evenly spread activity gives 0, a single burst approaches 1. An empty
    timeline returns 0.
    """
    days = timeline.distinct_days
    if not days:
        log.debug("clumpiness of empty timeline for user %s set to 0", timeline.user_id)
        return 0.0
    span = timeline.horizon + 1
    t = np.concatenate(([0], days, [span])).astype(np.float64)
    x = np.diff(t) / span
    return float(1.0 + np.sum(x * np.log(x)) / math.log(span))


def fs5_geo_features(user: UserProfile, events: list[ActivityEvent]) -> tuple[float, float]:
    if not events:
        return 0.0, 0.0
    hx, hy = user.geo
    d = [math.hypot(e.geo[0] - hx, e.geo[1] - hy) for e in events]
    avg = float(np.mean(d))
    return avg, avg / len(events)


def trend_ratios(sequence) -> tuple[float, float]:
    """Share of strictly increasing / decreasing consecutive pairs."""
    seq = list(sequence)
    if len(seq) < 2:
        return 0.0, 0.0
    pairs = len(seq) - 1
    up = sum(b > a for a, b in zip(seq, seq[1:]))
    down = sum(b < a for a, b in zip(seq, seq[1:]))
    return up / pairs, down / pairs


def mean_activity_geo(events: list[ActivityEvent], home=(0.0, 0.0)) -> tuple[float, float]:
    if not events:
        return float(home[0]), float(home[1])
    g = np.array([e.geo for e in events], dtype=np.float64)
    m = g.mean(axis=0)
    return float(m[0]), float(m[1])


def user_feature_row(feature_set: str, user: UserProfile, events: list[ActivityEvent],
                     branches, encoding: EncodingMap, cluster: int | None = None,
                     k: int | None = None, weighting: str = "uniform") -> np.ndarray:
    """Base (non-branch) feature row of one user, built from the per-user functions.

    Reference path for :func:`assemble`; slow, intended for checks.
    """
    level = min(fs_index(feature_set), 8)
    parts = [_user_block(user, encoding)]
    vecs = np.array([one_hot(e, encoding) for e in events]).reshape(
        len(events), len(event_manifest(encoding)))
    if weighting == "recency":
        parts.append(recency_weighted_mean(vecs, [e.day_index for e in events]))
    else:
        parts.append(fs1_mean_activity(vecs))
    if level >= 2:
        parts.append([min_branch_distance(user.geo, branches)])
    if level >= 3:
        parts.append(fs3_counters(user, events, encoding).as_array())
    if level >= 4:
        tl = ActivityTimeline(user.user_id, tuple(e.day_index for e in events))
        parts.append([*inter_activity_stats(tl), clumpiness(tl)])
    if level >= 5:
        parts.append(fs5_geo_features(user, events))
    if level >= 6:
        parts.append(trend_ratios([AMT_ORDINAL.get(e.amt_cat, 0) for e in events])
                     + trend_ratios([MC_ORDINAL.get(e.mc_cat, 0) for e in events]))
    if level >= 7:
        parts.append([min_branch_distance(mean_activity_geo(events, user.geo), branches)])
    if level >= 8:
        onehot = np.zeros(k)
        onehot[cluster] = 1.0
        parts.append(np.concatenate([[cluster], onehot]))
    return np.concatenate([np.asarray(p, dtype=np.float64).ravel() for p in parts])


def _user_block(user: UserProfile, encoding: EncodingMap) -> np.ndarray:
    blocks = []
    for col in ("age_cat", "loc_cat"):
        key = f"users.{col}"
        b = np.zeros(len(encoding.tokens(key)))
        b[encoding.code(key, getattr(user, col))] = 1.0
        blocks.append(b)
    blocks.append(np.asarray(user.geo, dtype=np.float64))
    blocks.append(np.asarray(user.cc_months + user.wealth_months, dtype=np.float64))
    return np.concatenate(blocks)


# ------------------------------------------------------------ batch path


def _columns_fs1(encoding: EncodingMap) -> list[Column]:
    cols = []
    for col in ("age_cat", "loc_cat"):
        cols += [Column(f"user_{col}={t}", "FS1", "indicator")
                 for t in encoding.tokens(f"users.{col}")]
    cols += [Column("geo_x", "FS1", "numeric"), Column("geo_y", "FS1", "numeric")]
    cols += [Column(c, "FS1", "indicator") for c in CC_COLUMNS + WEALTH_COLUMNS]
    for name in event_manifest(encoding):
        cols.append(Column(f"act_{name}", "FS1", "numeric"))
    return cols


def feature_columns(feature_set: str, encoding: EncodingMap, k: int | None = None) -> list[Column]:
    level = fs_index(feature_set)
    cols = _columns_fs1(encoding)
    if level >= 2:
        cols.append(Column("min_branch_dist_home", "FS2", "numeric"))
    if level >= 3:
        cols += [Column(n, "FS3", "numeric") for n in FS3_NAMES]
    if level >= 4:
        cols += [Column(n, "FS4", "numeric") for n in ("iat_mean", "iat_std", "clumpiness")]
    if level >= 5:
        cols += [Column(n, "FS5", "numeric") for n in ("act_home_dist_mean", "act_home_dist_ratio")]
    if level >= 6:
        cols += [Column(n, "FS6", "numeric")
                 for n in ("amt_trend_pos", "amt_trend_neg", "mc_trend_pos", "mc_trend_neg")]
    if level >= 7:
        cols.append(Column("min_branch_dist_act", "FS7", "numeric"))
    if level >= 8:
        cols.append(Column("cluster", "FS8", "numeric"))
        cols += [Column(f"cluster={j}", "FS8", "indicator") for j in range(k)]
    return cols


def _group_sum(r, values, n):
    """Per-user sums of rows of ``values`` (1-D or 2-D) given event->user index ``r``."""
    if values.ndim == 1:
        return np.bincount(r, weights=values, minlength=n)
    out = np.zeros((n, values.shape[1]))
    np.add.at(out, r, values)
    return out


def _distinct_count(r, codes, n):
    width = int(codes.max()) + 1 if len(codes) else 1
    keys = np.unique(r.astype(np.int64) * width + codes)
    return np.bincount(keys // width, minlength=n).astype(np.float64)


def _mode_codes(r, codes, n_codes, n):
    counts = np.zeros((n, n_codes), dtype=np.int64)
    np.add.at(counts, (r, codes), 1)
    return counts.argmax(axis=1).astype(np.float64)  # zero row -> 0


def _min_dist_to(points, branch_geo, chunk=4096):
    out = np.empty(len(points))
    for s in range(0, len(points), chunk):
        p = points[s:s + chunk]
        d = np.hypot(p[:, None, 0] - branch_geo[None, :, 0], p[:, None, 1] - branch_geo[None, :, 1])
        out[s:s + chunk] = d.min(axis=1)
    return out


def _timeline_stats(r, days, n, horizon):
    """Inter-activity mean/std and clumpiness for every user from sorted events."""
    if len(r) == 0:
        return np.zeros(n), np.zeros(n), np.zeros(n)
    width = horizon + 1
    keys = np.unique(r.astype(np.int64) * width + days)  # sorted by user then day
    ur, ud = keys // width, (keys % width).astype(np.float64)
    n_distinct = np.bincount(ur, minlength=n)
    same = ur[1:] == ur[:-1]
    gaps = np.diff(ud)[same]
    gr = ur[1:][same]
    n_gaps = np.bincount(gr, minlength=n).astype(np.float64)
    has_gaps = n_gaps > 0
    g_sum = np.bincount(gr, weights=gaps, minlength=n)
    mean = np.divide(g_sum, n_gaps, out=np.zeros(n), where=has_gaps)
    dev = gaps - mean[gr]
    var = np.divide(np.bincount(gr, weights=dev * dev, minlength=n), n_gaps,
                    out=np.zeros(n), where=has_gaps)
    std = np.sqrt(var)

    span = horizon + 1
    first = np.r_[True, ~same]
    last = np.r_[~same, True]
    # interior gaps, leading gap from 0 and trailing gap to span
    x_in = gaps / span
    x_first = ud[first] / span
    x_last = (span - ud[last]) / span
    xlx = np.bincount(gr, weights=x_in * np.log(x_in), minlength=n)
    xlx[ur[first]] += x_first * np.log(x_first)
    xlx[ur[last]] += x_last * np.log(x_last)
    clump = np.where(n_distinct > 0, 1.0 + xlx / math.log(span), 0.0)
    return mean, std, clump


def _trend(r, ordinal, n):
    same = r[1:] == r[:-1]
    d = np.diff(ordinal)[same]
    gr = r[1:][same]
    pairs = np.bincount(gr, minlength=n).astype(np.float64)
    up = np.bincount(gr, weights=(d > 0).astype(np.float64), minlength=n)
    down = np.bincount(gr, weights=(d < 0).astype(np.float64), minlength=n)
    ok = pairs > 0
    return (np.divide(up, pairs, out=np.zeros(n), where=ok),
            np.divide(down, pairs, out=np.zeros(n), where=ok))


def assemble(feature_set: str, ds: Dataset, encoding: EncodingMap, kmeans=None, *,
             weighting: str = "uniform", horizon: int = N_DAYS) -> FeatureMatrix:
    """Build the cumulative feature matrix for ``feature_set`` (rows in user_id order).

    FS8 and above need a fitted ``kmeans`` model over home geolocations.
    For FS9/FS10 the returned matrix holds the FS8 columns and records which
    branch columns :meth:`FeatureMatrix.with_branch` must append.
    """
    from .clustering import kmeans_assign_many

    level = fs_index(feature_set)
    if level >= 8 and kmeans is None:
        raise ValueError(f"{feature_set} requires a fitted k-means model (FS8 cluster feature)")
    if weighting not in ("uniform", "recency"):
        raise ValueError(f"unknown weighting {weighting!r}")

    users = ds.users
    n = len(users)
    uid = users["user_id"].to_numpy()
    home = users[["geo_x", "geo_y"]].to_numpy(dtype=np.float64)
    branch_geo = ds.branches[["geo_x", "geo_y"]].to_numpy(dtype=np.float64)

    acts = ds.activities.sort_values(["user_id", "day_index"], kind="stable")
    r = np.searchsorted(uid, acts["user_id"].to_numpy())
    days = acts["day_index"].to_numpy()
    n_events = np.bincount(r, minlength=n).astype(np.float64)
    active = n_events > 0

    parts = []
    # FS1: user block
    for col in ("age_cat", "loc_cat"):
        key = f"users.{col}"
        codes = encoding.codes(key, users[col].to_numpy())
        block = np.zeros((n, len(encoding.tokens(key))))
        block[np.arange(n), codes] = 1.0
        parts.append(block)
    parts.append(home)
    parts.append(users[list(CC_COLUMNS + WEALTH_COLUMNS)].to_numpy(dtype=np.float64))
    # FS1: averaged encoded activities
    enc = encode_activities(acts, encoding)
    if weighting == "recency":
        w = np.log1p(days.astype(np.float64))
        wsum = _group_sum(r, w, n)
        sums = _group_sum(r, enc * w[:, None], n)
        parts.append(np.divide(sums, wsum[:, None], out=np.zeros_like(sums),
                               where=wsum[:, None] > 0))
    else:
        sums = _group_sum(r, enc, n)
        parts.append(np.divide(sums, n_events[:, None], out=np.zeros_like(sums),
                               where=active[:, None]))

    if level >= 2:
        parts.append(_min_dist_to(home, branch_geo)[:, None])
    if level >= 3:
        pos = (acts["channel"].to_numpy() == "pos").astype(np.float64)
        credit = (acts["card"].to_numpy() == "credit").astype(np.float64)
        n_pos = _group_sum(r, pos, n)
        n_credit = _group_sum(r, credit, n)
        amt_ord = acts["amt_cat"].map(AMT_ORDINAL).fillna(0).to_numpy(dtype=np.int64)
        max_amt = np.zeros(n, dtype=np.int64)
        np.maximum.at(max_amt, r, amt_ord)
        last_day = np.zeros(n, dtype=np.int64)
        np.maximum.at(last_day, r, days)
        since = np.where(active, horizon - last_day, 0)
        codes = {c: encoding.codes(f"activities.{c}", acts[c].to_numpy())
                 for c in ("amt_cat", "loc_cat", "time_slot", "mc_cat")}
        counters = np.column_stack([
            n_pos, n_events - n_pos, n_credit, n_events - n_credit,
            _distinct_count(r, codes["amt_cat"], n), max_amt, since,
            _distinct_count(r, codes["loc_cat"], n),
            _distinct_count(r, codes["time_slot"], n),
            _distinct_count(r, codes["mc_cat"], n),
            n_events,
            _mode_codes(r, codes["time_slot"], len(encoding.tokens("activities.time_slot")), n),
            _mode_codes(r, codes["loc_cat"], len(encoding.tokens("activities.loc_cat")), n),
            users[list(CC_COLUMNS)].to_numpy().sum(axis=1),
            users[list(WEALTH_COLUMNS)].to_numpy().sum(axis=1),
        ]).astype(np.float64)
        parts.append(counters)
    if level >= 4:
        parts.append(np.column_stack(_timeline_stats(r, days, n, horizon)))
    geo = acts[["geo_x", "geo_y"]].to_numpy(dtype=np.float64)
    if level >= 5:
        d = np.hypot(geo[:, 0] - home[r, 0], geo[:, 1] - home[r, 1])
        avg = np.divide(_group_sum(r, d, n), n_events, out=np.zeros(n), where=active)
        ratio = np.divide(avg, n_events, out=np.zeros(n), where=active)
        parts.append(np.column_stack([avg, ratio]))
    if level >= 6:
        amt = acts["amt_cat"].map(AMT_ORDINAL).fillna(0).to_numpy(dtype=np.float64)
        mc = acts["mc_cat"].map(MC_ORDINAL).fillna(0).to_numpy(dtype=np.float64)
        parts.append(np.column_stack([*_trend(r, amt, n), *_trend(r, mc, n)]))

    gsum = _group_sum(r, geo, n)
    act_geo = np.where(active[:, None], gsum / np.maximum(n_events, 1)[:, None], home)
    if level >= 7:
        parts.append(_min_dist_to(act_geo, branch_geo)[:, None])
    k = None
    if level >= 8:
        k = kmeans.k
        labels = kmeans_assign_many(kmeans, home)
        onehot = np.zeros((n, k))
        onehot[np.arange(n), labels] = 1.0
        parts.append(np.column_stack([labels.astype(np.float64), onehot]))

    values = np.hstack(parts)
    columns = tuple(feature_columns(feature_set if level <= 8 else "FS8", encoding, k))
    assert values.shape[1] == len(columns)
    if not np.isfinite(values).all():
        raise ValueError("non-finite feature values")
    branch_sets = tuple(fs for fs in BRANCH_SETS if level >= fs_index(fs))
    return FeatureMatrix(uid.copy(), values, columns, home, act_geo, branch_sets)


# ------------------------------------------------------------- transforms


def log_transform(fm: FeatureMatrix) -> FeatureMatrix:
    """``ln(1 + max(x, 0))`` on numeric columns; indicator columns untouched."""
    values = fm.values.copy()
    numeric = np.array([c.kind == "numeric" for c in fm.columns], dtype=bool)
    values[:, numeric] = np.log1p(np.maximum(values[:, numeric], 0.0))
    return fm.with_values(values)


@dataclass
class StandardScaler:
    mean: np.ndarray = field(default_factory=lambda: np.zeros(0))
    scale: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def fit(self, values) -> "StandardScaler":
        values = np.asarray(values, dtype=np.float64)
        if values.shape[0] < 2:
            raise ValueError("feature scaling needs at least two rows")
        self.mean = values.mean(axis=0)
        self.scale = values.std(axis=0)
        return self

    def transform(self, values) -> np.ndarray:
        centred = np.asarray(values, dtype=np.float64) - self.mean
        # constant columns map to 0
        safe = np.where(self.scale > 0, self.scale, 1.0)
        return np.where(self.scale > 0, centred / safe, 0.0)

    def to_dict(self):
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["mean"]), np.asarray(d["scale"]))


def scale_features(fm: FeatureMatrix, scaler: StandardScaler | None = None):
    """Standardise every column; fits a new scaler unless one is given."""
    if scaler is None:
        scaler = StandardScaler().fit(fm.values)
    return fm.with_values(scaler.transform(fm.values)), scaler
