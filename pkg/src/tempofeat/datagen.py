"""Seeded synthetic users/activities/branches/visits with planted, recoverable signal.

Stands in for the proprietary bank-card data. The planted quantities (latent
cluster, activity intensity, label probability, expected visit rates) are
written next to the CSVs so tests can compare learners against the oracle.
"""

from __future__ import annotations

import dataclasses
import datetime as dt
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .data import (
    ACTIVITY_COLUMNS,
    BRANCH_COLUMNS,
    CC_COLUMNS,
    EPOCH,
    MISSING_TOKEN,
    USER_COLUMNS,
    VISIT_COLUMNS,
    WEALTH_COLUMNS,
)


@dataclass(frozen=True)
class GenConfig:
    n_users: int = 5000
    n_branches: int = 40
    n_days: int = 181
    k_true: int = 8
    seed: int = 0
    # events per user over the window: lognormal intensity clipped to this range
    activity_rate: tuple[float, float] = (1.0, 120.0)
    mean_activity: float = 20.0
    inactive_rate: float = 0.045
    # geography
    extent: float = 100.0
    cluster_spread: float = 5.0
    activity_spread: float = 3.0
    # task 1: expected visits = visit_scale * propensity * popularity * exp(-d / distance_scale)
    distance_decay: bool = True
    distance_scale: float = 8.0
    visit_scale: float = 4.0
    popularity_sigma: float = 0.05
    # task 2: logit = intercept + coef . standardised [log activity, wealth months, cc months]
    label_intercept: float = -1.0
    label_coef: tuple[float, float, float] = (1.0, 0.9, -0.6)
    missing_rate: float = 0.01

    def __post_init__(self):
        if min(self.n_users, self.n_branches, self.n_days, self.k_true) <= 0:
            raise ValueError("counts must be positive")
        if not 0 <= self.missing_rate < 1:
            raise ValueError("missing_rate must lie in [0, 1)")
        object.__setattr__(self, "activity_rate", tuple(self.activity_rate))
        object.__setattr__(self, "label_coef", tuple(self.label_coef))

    @classmethod
    def full_scale(cls, **kw) -> "GenConfig":
        return cls(n_users=191_238, n_branches=323, **kw)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["activity_rate"] = list(self.activity_rate)
        d["label_coef"] = list(self.label_coef)
        return d


@dataclass
class PlantedTruth:
    user_ids: np.ndarray
    cluster: np.ndarray
    intensity: np.ndarray
    burstiness: np.ndarray
    label_prob: np.ndarray
    visit_rates: np.ndarray = field(repr=False)  # users x branches
    branch_popularity: np.ndarray = field(repr=False, default=None)

    def save(self, out_dir) -> None:
        out = Path(out_dir)
        np.save(out / "visit_rates.npy", self.visit_rates)
        doc = {
            "user_id": self.user_ids.tolist(),
            "cluster": self.cluster.tolist(),
            "intensity": [round(float(v), 10) for v in self.intensity],
            "burstiness": [round(float(v), 10) for v in self.burstiness],
            "label_prob": [round(float(v), 12) for v in self.label_prob],
            "branch_popularity": [round(float(v), 12) for v in self.branch_popularity],
            "visit_rates_file": "visit_rates.npy",
        }
        (out / "truth.json").write_text(json.dumps(doc) + "\n")

    @classmethod
    def load(cls, out_dir) -> "PlantedTruth":
        out = Path(out_dir)
        doc = json.loads((out / "truth.json").read_text())
        return cls(
            user_ids=np.asarray(doc["user_id"], dtype=np.int64),
            cluster=np.asarray(doc["cluster"], dtype=np.int64),
            intensity=np.asarray(doc["intensity"]),
            burstiness=np.asarray(doc["burstiness"]),
            label_prob=np.asarray(doc["label_prob"]),
            visit_rates=np.load(out / doc["visit_rates_file"]),
            branch_popularity=np.asarray(doc["branch_popularity"]),
        )


def _fmt(values) -> np.ndarray:
    return np.array([f"{v:.4f}" for v in values], dtype=object)


def _inject_missing(df: pd.DataFrame, columns, rate, rng):
    if rate <= 0:
        return
    for col in columns:
        hit = rng.random(len(df)) < rate
        if hit.any():
            vals = df[col].to_numpy(dtype=object)
            vals[hit] = MISSING_TOKEN
            df[col] = vals


def generate(cfg: GenConfig, out_dir) -> PlantedTruth:
    """Write users/activities/branches/visits CSVs plus truth.json and genconfig.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    streams = np.random.SeedSequence(cfg.seed).spawn(6)
    r_geo, r_act, r_evt, r_vis, r_lab, r_miss = (np.random.default_rng(s) for s in streams)
    n, B, N = cfg.n_users, cfg.n_branches, cfg.n_days

    # geography
    margin = 0.1 * cfg.extent
    centres = r_geo.uniform(margin, cfg.extent - margin, (cfg.k_true, 2))
    cluster = r_geo.integers(0, cfg.k_true, n)
    home = centres[cluster] + r_geo.normal(0, cfg.cluster_spread, (n, 2))
    branch_geo = r_geo.uniform(0, cfg.extent, (B, 2))
    work = home + r_geo.normal(0, 2 * cfg.activity_spread, (n, 2))

    # static profile
    age = r_act.choice(np.array(["a", "b", "c"]), n, p=[0.31, 0.55, 0.14])
    has_cc = r_act.random(n) < 0.35
    cc_start = r_act.integers(1, 7, n)
    cc = (has_cc[:, None] & (np.arange(1, 7)[None, :] >= cc_start[:, None])).astype(int)
    wealthy = r_act.random(n) < 0.25
    w_p = np.where(wealthy, 0.85, 0.03)
    wealth = (r_act.random((n, 6)) < w_p[:, None]).astype(int)

    # activity timelines
    lo, hi = cfg.activity_rate
    intensity = np.clip(r_act.lognormal(np.log(cfg.mean_activity), 0.7, n), lo, hi)
    inactive = r_act.random(n) < cfg.inactive_rate
    n_ev = np.where(inactive, 0, np.maximum(r_act.poisson(intensity), 1))
    burst = r_act.random(n)
    n_windows = r_act.integers(1, 4, n)
    windows = r_act.integers(1, N + 1, (n, 3))

    owner = np.repeat(np.arange(n), n_ev)
    E = len(owner)
    in_burst = r_evt.random(E) < burst[owner]
    pick = (r_evt.random(E) * n_windows[owner]).astype(int)
    centre = windows[owner, pick]
    burst_day = np.clip(np.rint(centre + r_evt.normal(0, 2.5, E)), 1, N).astype(int)
    flat_day = r_evt.integers(1, N + 1, E)
    day = np.where(in_burst, burst_day, flat_day)

    slot_pref = r_evt.integers(0, 6, n)
    slot = np.where(r_evt.random(E) < 0.6, slot_pref[owner], r_evt.integers(0, 6, E))
    p_pos = r_evt.beta(4, 2, n)
    channel = np.where(r_evt.random(E) < p_pos[owner], "pos", "web")
    p_credit = np.where(has_cc, 0.7, 0.1)
    card = np.where(r_evt.random(E) < p_credit[owner], "credit", "debit")
    amt_level = r_evt.integers(0, 3, n)
    amt = np.clip(amt_level[owner] + r_evt.integers(-1, 2, E), 0, 2)
    mc_pref = r_evt.integers(0, 10, n)
    mc = np.where(r_evt.random(E) < 0.5, mc_pref[owner], r_evt.integers(0, 10, E))
    n_loc = cfg.k_true + 4
    loc = np.where(r_evt.random(E) < 0.7, cluster[owner], r_evt.integers(0, n_loc, E))
    near_home = r_evt.random(E) < 0.7
    base = np.where(near_home[:, None], home[owner], work[owner])
    ev_geo = base + r_evt.normal(0, cfg.activity_spread, (E, 2))

    # task 1 visits
    popularity = np.exp(r_vis.normal(0, cfg.popularity_sigma, B))
    propensity = 0.5 + 0.5 * intensity / intensity.mean()
    rates = np.empty((n, B))
    chunk = 8192
    for s in range(0, n, chunk):
        h = home[s:s + chunk]
        d = np.hypot(h[:, None, 0] - branch_geo[None, :, 0], h[:, None, 1] - branch_geo[None, :, 1])
        decay = np.exp(-d / cfg.distance_scale) if cfg.distance_decay else np.ones_like(d)
        rates[s:s + chunk] = cfg.visit_scale * propensity[s:s + chunk, None] * popularity * decay
    visits = r_vis.poisson(rates)

    # task 2 labels
    feats = np.column_stack([np.log1p(n_ev), wealth.sum(axis=1), cc.sum(axis=1)]).astype(float)
    sd = feats.std(axis=0)
    z = (feats - feats.mean(axis=0)) / np.where(sd > 0, sd, 1.0)
    logit = cfg.label_intercept + z @ np.asarray(cfg.label_coef)
    prob = 1.0 / (1.0 + np.exp(-logit))
    label = (r_lab.random(n) < prob).astype(int)

    # tables
    user_ids = np.arange(1, n + 1)
    users = pd.DataFrame({
        "user_id": user_ids.astype(str),
        "age_cat": age.astype(object),
        "loc_cat": np.array([f"R{c}" for c in cluster], dtype=object),
        "geo_x": _fmt(home[:, 0]),
        "geo_y": _fmt(home[:, 1]),
    })
    for i, c in enumerate(CC_COLUMNS):
        users[c] = cc[:, i].astype(str)
    for i, c in enumerate(WEALTH_COLUMNS):
        users[c] = wealth[:, i].astype(str)
    users["target"] = label.astype(str)

    dates = np.array([(EPOCH + dt.timedelta(days=i)).isoformat() for i in range(N)], dtype=object)
    letters = np.array(list("abcdefghij"), dtype=object)
    order = np.lexsort((day, owner))
    acts = pd.DataFrame({
        "user_id": user_ids[owner].astype(str),
        "date": dates[day - 1],
        "time_slot": letters[slot],
        "channel": channel.astype(object),
        "card": card.astype(object),
        "amt_cat": letters[amt],
        "loc_cat": np.array([f"L{v}" for v in loc], dtype=object),
        "mc_cat": letters[mc],
        "geo_x": _fmt(ev_geo[:, 0]),
        "geo_y": _fmt(ev_geo[:, 1]),
    }).iloc[order].reset_index(drop=True)

    branches = pd.DataFrame({
        "branch_id": np.arange(B).astype(str),
        "geo_x": _fmt(branch_geo[:, 0]),
        "geo_y": _fmt(branch_geo[:, 1]),
    })
    vu, vb = np.nonzero(visits)
    visit_df = pd.DataFrame({
        "user_id": user_ids[vu].astype(str),
        "branch_id": vb.astype(str),
        "visits": visits[vu, vb].astype(str),
    })

    _inject_missing(users, ["age_cat", "loc_cat", "geo_x", "geo_y", *CC_COLUMNS, *WEALTH_COLUMNS],
                    cfg.missing_rate, r_miss)
    _inject_missing(acts, ["time_slot", "channel", "card", "amt_cat", "loc_cat", "mc_cat",
                           "geo_x", "geo_y"], cfg.missing_rate, r_miss)

    users[USER_COLUMNS + ["target"]].to_csv(out / "users.csv", index=False, lineterminator="\n")
    acts[ACTIVITY_COLUMNS].to_csv(out / "activities.csv", index=False, lineterminator="\n")
    branches[BRANCH_COLUMNS].to_csv(out / "branches.csv", index=False, lineterminator="\n")
    visit_df[VISIT_COLUMNS].to_csv(out / "visits.csv", index=False, lineterminator="\n")
    (out / "genconfig.json").write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")

    truth = PlantedTruth(user_ids, cluster, intensity, burst, prob, rates, popularity)
    truth.save(out)
    return truth
