"""Loading, validation and encoding of the users / activities / branches tables.

Missing values arrive as the literal token ``-``. Categorical cells become the
synthetic token :data:`MISSING`, numeric cells become ``0``.
"""

from __future__ import annotations

import csv
import datetime as dt
import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

log = logging.getLogger(__name__)

MISSING = "__MISSING__"
MISSING_TOKEN = "-"
N_DAYS = 181
EPOCH = dt.date(2014, 1, 1)

USER_COLUMNS = (
    ["user_id", "age_cat", "loc_cat", "geo_x", "geo_y"]
    + [f"c{i}" for i in range(1, 7)]
    + [f"w{i}" for i in range(1, 7)]
)
ACTIVITY_COLUMNS = [
    "user_id", "date", "time_slot", "channel", "card",
    "amt_cat", "loc_cat", "mc_cat", "geo_x", "geo_y",
]
BRANCH_COLUMNS = ["branch_id", "geo_x", "geo_y"]
VISIT_COLUMNS = ["user_id", "branch_id", "visits"]

CC_COLUMNS = tuple(f"c{i}" for i in range(1, 7))
WEALTH_COLUMNS = tuple(f"w{i}" for i in range(1, 7))

USER_CATEGORICAL = ("age_cat", "loc_cat")
ACTIVITY_CATEGORICAL = ("time_slot", "channel", "card", "amt_cat", "loc_cat", "mc_cat")

# None means an open token set (any non-empty string).
DOMAINS: dict[str, tuple[str, ...] | None] = {
    "age_cat": ("a", "b", "c"),
    "loc_cat": None,
    "time_slot": tuple("abcdef"),
    "channel": ("pos", "web"),
    "card": ("credit", "debit"),
    "amt_cat": ("a", "b", "c"),
    "mc_cat": tuple("abcdefghij"),
}

# ordinal codes, 0 reserved for missing / no activity
AMT_ORDINAL = {"a": 1, "b": 2, "c": 3}
MC_ORDINAL = {t: i + 1 for i, t in enumerate("abcdefghij")}


class ParseError(ValueError):
    def __init__(self, file, line, column, message):
        self.file, self.line, self.column = str(file), line, column
        super().__init__(f"{file}:{line}: column {column!r}: {message}")


class IntegrityError(ValueError):
    pass


class EncodingError(ValueError):
    pass


@dataclass(frozen=True)
class UserProfile:
    user_id: int
    age_cat: str
    loc_cat: str
    geo: tuple[float, float]
    cc_months: tuple[int, ...]
    wealth_months: tuple[int, ...]
    task2_label: int | None = None


@dataclass(frozen=True)
class ActivityEvent:
    user_id: int
    day_index: int
    time_slot: str
    channel: str
    card: str
    amt_cat: str
    mc_cat: str
    loc_cat: str
    geo: tuple[float, float]


@dataclass(frozen=True)
class BranchInfo:
    branch_id: int
    geo: tuple[float, float]


@dataclass(frozen=True)
class IntegrityReport:
    n_users: int = 0
    n_activities: int = 0
    n_unknown_user_activities: int = 0
    n_missing_geo_activities: int = 0
    n_missing_age: int = 0
    n_inactive_users: int = 0


@dataclass(frozen=True)
class Dataset:
    """In-memory dataset. Tables are treated as read-only after construction.

    ``activities`` keeps file order; feature code sorts it stably by
    ``(user_id, day_index)`` when sequence order matters.
    """

    users: pd.DataFrame
    activities: pd.DataFrame
    branches: pd.DataFrame
    visits: pd.DataFrame | None = None
    report: IntegrityReport = field(default_factory=IntegrityReport)

    @property
    def user_ids(self) -> np.ndarray:
        return self.users["user_id"].to_numpy()

    @property
    def has_labels(self) -> bool:
        return "target" in self.users.columns

    def subset(self, user_ids) -> "Dataset":
        keep = np.asarray(sorted(set(int(u) for u in user_ids)), dtype=np.int64)
        users = self.users[self.users["user_id"].isin(keep)].reset_index(drop=True)
        acts = self.activities[self.activities["user_id"].isin(keep)].reset_index(drop=True)
        visits = None
        if self.visits is not None:
            visits = self.visits[self.visits["user_id"].isin(keep)].reset_index(drop=True)
        return Dataset(users, acts, self.branches, visits, self.report)

    def with_users(self, users: pd.DataFrame) -> "Dataset":
        return Dataset(users, self.activities, self.branches, self.visits, self.report)

    def profile(self, user_id: int) -> UserProfile:
        row = self.users.loc[self.users["user_id"] == user_id].iloc[0]
        label = int(row["target"]) if "target" in row.index else None
        return UserProfile(
            user_id=int(row["user_id"]),
            age_cat=row["age_cat"],
            loc_cat=row["loc_cat"],
            geo=(float(row["geo_x"]), float(row["geo_y"])),
            cc_months=tuple(int(row[c]) for c in CC_COLUMNS),
            wealth_months=tuple(int(row[c]) for c in WEALTH_COLUMNS),
            task2_label=label,
        )

    def events(self, user_id: int) -> list[ActivityEvent]:
        """Events of one user ordered by day, file order within a day."""
        acts = self.activities[self.activities["user_id"] == user_id]
        acts = acts.sort_values("day_index", kind="stable")
        return [
            ActivityEvent(
                user_id=int(r.user_id), day_index=int(r.day_index),
                time_slot=r.time_slot, channel=r.channel, card=r.card,
                amt_cat=r.amt_cat, mc_cat=r.mc_cat, loc_cat=r.loc_cat,
                geo=(float(r.geo_x), float(r.geo_y)),
            )
            for r in acts.itertuples(index=False)
        ]

    def branch_list(self) -> list[BranchInfo]:
        return [
            BranchInfo(int(r.branch_id), (float(r.geo_x), float(r.geo_y)))
            for r in self.branches.itertuples(index=False)
        ]

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for df in (self.users, self.activities, self.branches, self.visits):
            if df is None:
                h.update(b"none")
                continue
            h.update(",".join(df.columns).encode())
            h.update(pd.util.hash_pandas_object(df, index=False).to_numpy().tobytes())
        return h.hexdigest()


# ---------------------------------------------------------------- parsing


def _read_rows(path: Path, expected: list[str], optional: tuple[str, ...] = ()):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(path, 1, None, "empty file, header row required") from None
        allowed = [expected + list(optional[:i]) for i in range(len(optional) + 1)]
        if header not in allowed:
            raise ParseError(path, 1, None, f"header {header} does not match {expected}")
        width = len(header)
        rows, lines = [], []
        for row in reader:
            if not row:
                continue
            if len(row) != width:
                raise ParseError(
                    path, reader.line_num, None,
                    f"expected {width} fields, found {len(row)}",
                )
            rows.append(row)
            lines.append(reader.line_num)
    df = pd.DataFrame(rows, columns=header, dtype=object)
    return df, np.asarray(lines, dtype=np.int64)


def _fail_first(path, lines, bad: np.ndarray, column, message):
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise ParseError(path, int(lines[i]), column, message(i))


def _parse_ids(df, lines, path, column):
    raw = df[column].astype(str)
    vals = pd.to_numeric(raw, errors="coerce")
    bad = vals.isna().to_numpy() | (vals.fillna(-1).to_numpy() < 0)
    bad |= ~np.isclose(vals.fillna(0).to_numpy() % 1, 0)
    _fail_first(path, lines, bad, column, lambda i: f"invalid id {raw.iloc[i]!r}")
    return vals.to_numpy().astype(np.int64)


def _parse_numeric(df, lines, path, column, flags=False):
    raw = df[column].astype(str)
    missing = (raw == MISSING_TOKEN).to_numpy()
    vals = pd.to_numeric(raw.where(~missing, "0"), errors="coerce")
    _fail_first(path, lines, vals.isna().to_numpy(), column,
                lambda i: f"not a number: {raw.iloc[i]!r}")
    out = vals.to_numpy(dtype=np.float64)
    if flags:
        _fail_first(path, lines, ~np.isin(out, (0.0, 1.0)), column,
                    lambda i: f"flag must be 0 or 1, found {raw.iloc[i]!r}")
        out = out.astype(np.int64)
    return out, missing


def _parse_categorical(df, lines, path, column):
    raw = df[column].astype(str)
    missing = (raw == MISSING_TOKEN).to_numpy()
    domain = DOMAINS[column]
    if domain is None:
        bad = (raw.str.len() == 0).to_numpy()
    else:
        bad = ~raw.isin(domain).to_numpy() & ~missing
    _fail_first(path, lines, bad, column, lambda i: f"unknown category {raw.iloc[i]!r}")
    return raw.where(~missing, MISSING).to_numpy(dtype=object), missing


def _parse_dates(df, lines, path):
    raw = df["date"].astype(str)
    parsed = pd.to_datetime(raw, format="%Y-%m-%d", errors="coerce")
    _fail_first(path, lines, parsed.isna().to_numpy(), "date",
                lambda i: f"expected YYYY-MM-DD, found {raw.iloc[i]!r}")
    day = (parsed - pd.Timestamp(EPOCH)).dt.days.to_numpy() + 1
    _fail_first(path, lines, (day < 1) | (day > N_DAYS), "date",
                lambda i: f"day_index {day[i]} outside 1..{N_DAYS} ({raw.iloc[i]})")
    return day.astype(np.int64)


def read_users(path) -> tuple[pd.DataFrame, int]:
    path = Path(path)
    df, lines = _read_rows(path, USER_COLUMNS, optional=("target",))
    out = {"user_id": _parse_ids(df, lines, path, "user_id")}
    n_missing_age = 0
    for col in USER_CATEGORICAL:
        out[col], miss = _parse_categorical(df, lines, path, col)
        if col == "age_cat":
            n_missing_age = int(miss.sum())
    for col in ("geo_x", "geo_y"):
        out[col], _ = _parse_numeric(df, lines, path, col)
    for col in CC_COLUMNS + WEALTH_COLUMNS:
        out[col], _ = _parse_numeric(df, lines, path, col, flags=True)
    if "target" in df.columns:
        out["target"], _ = _parse_numeric(df, lines, path, "target", flags=True)
    users = pd.DataFrame(out)
    dup = users["user_id"].duplicated().to_numpy()
    if dup.any():
        i = int(np.flatnonzero(dup)[0])
        raise IntegrityError(
            f"{path}:{lines[i]}: duplicate user_id {users['user_id'].iloc[i]}"
        )
    return users, n_missing_age


def read_activities(path) -> tuple[pd.DataFrame, int]:
    path = Path(path)
    df, lines = _read_rows(path, ACTIVITY_COLUMNS)
    out = {"user_id": _parse_ids(df, lines, path, "user_id"),
           "day_index": _parse_dates(df, lines, path)}
    for col in ACTIVITY_CATEGORICAL:
        out[col], _ = _parse_categorical(df, lines, path, col)
    geo_missing = np.zeros(len(df), dtype=bool)
    for col in ("geo_x", "geo_y"):
        out[col], miss = _parse_numeric(df, lines, path, col)
        geo_missing |= miss
    return pd.DataFrame(out), int(geo_missing.sum())


def read_branches(path) -> pd.DataFrame:
    path = Path(path)
    df, lines = _read_rows(path, BRANCH_COLUMNS)
    out = {"branch_id": _parse_ids(df, lines, path, "branch_id")}
    for col in ("geo_x", "geo_y"):
        out[col], _ = _parse_numeric(df, lines, path, col)
    branches = pd.DataFrame(out)
    if branches["branch_id"].duplicated().any():
        raise IntegrityError(f"{path}: duplicate branch_id")
    return branches.sort_values("branch_id", kind="stable").reset_index(drop=True)


def read_visits(path) -> pd.DataFrame:
    path = Path(path)
    df, lines = _read_rows(path, VISIT_COLUMNS)
    visits = pd.DataFrame({
        "user_id": _parse_ids(df, lines, path, "user_id"),
        "branch_id": _parse_ids(df, lines, path, "branch_id"),
    })
    v, _ = _parse_numeric(df, lines, path, "visits")
    _fail_first(path, lines, v < 0, "visits", lambda i: f"negative visit count {v[i]}")
    visits["visits"] = v
    if visits.duplicated(["user_id", "branch_id"]).any():
        raise IntegrityError(f"{path}: duplicate (user_id, branch_id) pair")
    return visits


def load_dataset(data_dir=None, *, users=None, activities=None, branches=None,
                 visits=None) -> Dataset:
    """Load the CSV tables from ``data_dir`` (or explicit paths).

    Activities of unknown users are dropped and counted in the report.
    ``visits.csv`` is optional.
    """
    base = Path(data_dir) if data_dir is not None else None
    users = Path(users) if users else base / "users.csv"
    activities = Path(activities) if activities else base / "activities.csv"
    branches = Path(branches) if branches else base / "branches.csv"
    if visits is None and base is not None and (base / "visits.csv").exists():
        visits = base / "visits.csv"

    user_df, n_missing_age = read_users(users)
    act_df, n_missing_geo = read_activities(activities)
    branch_df = read_branches(branches)
    visit_df = read_visits(visits) if visits else None

    user_df = user_df.sort_values("user_id", kind="stable").reset_index(drop=True)
    known = act_df["user_id"].isin(user_df["user_id"]).to_numpy()
    n_unknown = int((~known).sum())
    if n_unknown:
        log.warning("dropping %d activities of unknown users", n_unknown)
        act_df = act_df[known].reset_index(drop=True)
    if n_missing_geo:
        log.warning("%d activities have a missing geolocation (set to 0)", n_missing_geo)
    if visit_df is not None:
        bad = ~visit_df["branch_id"].isin(branch_df["branch_id"])
        if bad.any():
            raise IntegrityError(f"{visits}: visits reference unknown branches")
        visit_df = visit_df[visit_df["user_id"].isin(user_df["user_id"])].reset_index(drop=True)

    report = IntegrityReport(
        n_users=len(user_df),
        n_activities=len(act_df),
        n_unknown_user_activities=n_unknown,
        n_missing_geo_activities=n_missing_geo,
        n_missing_age=n_missing_age,
        n_inactive_users=int((~user_df["user_id"].isin(act_df["user_id"])).sum()),
    )
    return Dataset(user_df, act_df, branch_df, visit_df, report)


# ----------------------------------------------------------- serialization


def _fmt_float(x: float) -> str:
    return repr(float(x))


def _cat_out(values) -> list[str]:
    return [MISSING_TOKEN if v == MISSING else v for v in values]


def write_dataset(ds: Dataset, out_dir) -> None:
    """Write ``ds`` back to the CSV schemas; MISSING is written as ``-``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    u = ds.users
    cols = USER_COLUMNS + (["target"] if ds.has_labels else [])
    with open(out / "users.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        cats = {c: _cat_out(u[c]) for c in USER_CATEGORICAL}
        for i, r in enumerate(u.itertuples(index=False)):
            row = [str(r.user_id), cats["age_cat"][i], cats["loc_cat"][i],
                   _fmt_float(r.geo_x), _fmt_float(r.geo_y)]
            row += [str(int(getattr(r, c))) for c in CC_COLUMNS + WEALTH_COLUMNS]
            if ds.has_labels:
                row.append(str(int(r.target)))
            w.writerow(row)
    a = ds.activities
    with open(out / "activities.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ACTIVITY_COLUMNS)
        cats = {c: _cat_out(a[c]) for c in ACTIVITY_CATEGORICAL}
        for i, r in enumerate(a.itertuples(index=False)):
            date = EPOCH + dt.timedelta(days=int(r.day_index) - 1)
            w.writerow([str(r.user_id), date.isoformat()]
                       + [cats[c][i] for c in ACTIVITY_CATEGORICAL]
                       + [_fmt_float(r.geo_x), _fmt_float(r.geo_y)])
    with open(out / "branches.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BRANCH_COLUMNS)
        for r in ds.branches.itertuples(index=False):
            w.writerow([str(r.branch_id), _fmt_float(r.geo_x), _fmt_float(r.geo_y)])
    if ds.visits is not None:
        with open(out / "visits.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(VISIT_COLUMNS)
            for r in ds.visits.itertuples(index=False):
                v = float(r.visits)
                w.writerow([str(r.user_id), str(r.branch_id),
                            str(int(v)) if v.is_integer() else _fmt_float(v)])


# ------------------------------------------------------------- imputation


def age_mode(users: pd.DataFrame) -> str:
    """Most frequent non-missing ``age_cat``; ties go to the smallest token."""
    present = users.loc[users["age_cat"] != MISSING, "age_cat"]
    if present.empty:
        raise ValueError("age_cat is missing for every user; no mode defined")
    counts = present.value_counts()
    best = counts.max()
    return min(counts.index[counts == best])


def impute_age_cat(users: pd.DataFrame, mode: str | None = None) -> pd.DataFrame:
    """Replace MISSING ``age_cat`` by ``mode`` (default: the modal category of ``users``)."""
    missing = users["age_cat"] == MISSING
    if not missing.any():
        return users
    if mode is None:
        mode = age_mode(users)
    out = users.copy()
    out.loc[missing, "age_cat"] = mode
    return out


# ---------------------------------------------------------------- encoding


@dataclass(frozen=True)
class EncodingMap:
    """Per-column token lists; a token's code is its position in the list.

    Keys are ``users.<column>`` and ``activities.<column>``.
    """

    columns: dict[str, tuple[str, ...]]

    def tokens(self, key: str) -> tuple[str, ...]:
        return self.columns[key]

    def code(self, key: str, token: str) -> int:
        try:
            return self.columns[key].index(token)
        except ValueError:
            raise EncodingError(f"unknown category {token!r} in column {key!r}") from None

    def codes(self, key: str, values) -> np.ndarray:
        tokens = self.columns[key]
        lookup = {t: i for i, t in enumerate(tokens)}
        vals = pd.Series(values, dtype=object)
        out = vals.map(lookup)
        if out.isna().any():
            bad = vals[out.isna()].iloc[0]
            raise EncodingError(f"unknown category {bad!r} in column {key!r}")
        return out.to_numpy(dtype=np.int64)

    def to_dict(self) -> dict:
        return {k: list(v) for k, v in self.columns.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "EncodingMap":
        return cls({k: tuple(v) for k, v in d.items()})


def fit_encoding(ds: Dataset) -> EncodingMap:
    """Lexicographically ordered token domains for every categorical column.

    Every column except the (imputed) ``age_cat`` keeps a MISSING code.
    """
    columns = {}
    for table, cols, df in (("users", USER_CATEGORICAL, ds.users),
                            ("activities", ACTIVITY_CATEGORICAL, ds.activities)):
        for col in cols:
            tokens = set(df[col].unique())
            if not (table == "users" and col == "age_cat"):
                tokens.add(MISSING)
            if not tokens:
                raise EncodingError(f"empty domain for column {table}.{col}")
            columns[f"{table}.{col}"] = tuple(sorted(tokens))
    return EncodingMap(columns)


def event_manifest(encoding: EncodingMap) -> list[str]:
    names = []
    for col in ACTIVITY_CATEGORICAL:
        names += [f"{col}={t}" for t in encoding.tokens(f"activities.{col}")]
    return names + ["geo_x", "geo_y"]


def one_hot(event: ActivityEvent, encoding: EncodingMap) -> np.ndarray:
    """Indicator block per activity categorical column, then the two coordinates."""
    parts = []
    for col in ACTIVITY_CATEGORICAL:
        key = f"activities.{col}"
        block = np.zeros(len(encoding.tokens(key)))
        block[encoding.code(key, getattr(event, col))] = 1.0
        parts.append(block)
    parts.append(np.asarray(event.geo, dtype=np.float64))
    return np.concatenate(parts)


def encode_activities(activities: pd.DataFrame, encoding: EncodingMap) -> np.ndarray:
    """Batch form of :func:`one_hot`; one row per activity."""
    blocks = []
    for col in ACTIVITY_CATEGORICAL:
        key = f"activities.{col}"
        codes = encoding.codes(key, activities[col].to_numpy())
        block = np.zeros((len(codes), len(encoding.tokens(key))))
        block[np.arange(len(codes)), codes] = 1.0
        blocks.append(block)
    blocks.append(activities[["geo_x", "geo_y"]].to_numpy(dtype=np.float64))
    return np.hstack(blocks)
