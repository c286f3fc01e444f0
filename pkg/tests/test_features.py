import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import clumpiness_direct, min_distance
from tempofeat.clustering import kmeans_fit
from tempofeat.data import (
    ActivityEvent,
    BranchInfo,
    EncodingMap,
    UserProfile,
    fit_encoding,
    impute_age_cat,
)
from tempofeat.features import (
    FEATURE_SETS,
    ActivityTimeline,
    CounterSet,
    assemble,
    clumpiness,
    fs1_mean_activity,
    fs3_counters,
    fs5_geo_features,
    inter_activity_stats,
    log_transform,
    mean_activity_geo,
    min_branch_distance,
    recency_weighted_mean,
    scale_features,
    trend_ratios,
    user_feature_row,
)

# 40-digit reference values computed independently with mpmath
CLUMP_DAY1 = 0.9934525782995161
CLUMP_60_120 = 0.7889141902604808

ENC = EncodingMap({
    "activities.time_slot": tuple("abcdef"),
    "activities.channel": ("__MISSING__", "pos", "web"),
    "activities.card": ("__MISSING__", "credit", "debit"),
    "activities.amt_cat": ("__MISSING__", "a", "b", "c"),
    "activities.loc_cat": ("L1", "L2", "__MISSING__"),
    "activities.mc_cat": ("__MISSING__",) + tuple("abcdefghij"),
})

days_strategy = st.lists(st.integers(1, 181), min_size=1, max_size=60)


def _user(geo=(0.0, 0.0), cc=(0,) * 6, wealth=(0,) * 6):
    return UserProfile(1, "a", "R1", geo, tuple(cc), tuple(wealth))


def _event(day, channel="pos", card="credit", amt="a", mc="a", slot="a", loc="L1",
           geo=(0.0, 0.0)):
    return ActivityEvent(1, day, slot, channel, card, amt, mc, loc, geo)


# ---------------------------------------------------------------- FS1 means


def test_mean_of_one_vector_is_that_vector():
    v = np.array([[1.0, 0.0, 3.5]])
    np.testing.assert_array_equal(fs1_mean_activity(v), v[0])


def test_mean_of_no_vectors_is_zero():
    np.testing.assert_array_equal(fs1_mean_activity(np.zeros((0, 4))), np.zeros(4))
    np.testing.assert_array_equal(recency_weighted_mean(np.zeros((0, 4)), []), np.zeros(4))


def test_mean_two_vectors():
    out = fs1_mean_activity(np.array([[1.0, 0, 2], [0, 0, 4]]))
    np.testing.assert_array_equal(out, [0.5, 0, 3])


def test_recency_same_day_equals_plain_mean(rng):
    v = rng.normal(size=(5, 3))
    np.testing.assert_allclose(recency_weighted_mean(v, [40] * 5), v.mean(axis=0), atol=1e-14)


def test_recency_weights_first_and_last_day():
    v1, v2 = np.array([1.0, 0.0]), np.array([0.0, 2.0])
    expected = (math.log(2) * v1 + math.log(182) * v2) / (math.log(2) + math.log(182))
    np.testing.assert_allclose(recency_weighted_mean(np.vstack([v1, v2]), [1, 181]), expected,
                               atol=1e-15)


# -------------------------------------------------------------- distances


def test_min_branch_distance_cases(rng):
    assert min_branch_distance((2.0, 3.0), [BranchInfo(0, (2.0, 3.0)), BranchInfo(1, (9, 9))]) == 0
    assert min_branch_distance((3, 4), [BranchInfo(0, (0.0, 0.0))]) == 5.0
    branches = rng.uniform(-50, 50, (10, 2))
    p = rng.uniform(-50, 50, 2)
    assert min_branch_distance(p, branches) == pytest.approx(min_distance(p, branches), abs=1e-12)


def test_min_branch_distance_empty():
    with pytest.raises(ValueError):
        min_branch_distance((0, 0), [])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=1, max_size=8),
       st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)))
def test_min_branch_distance_lower_bound(branches, p):
    d = min_branch_distance(p, branches)
    for b in branches:
        assert d <= math.dist(p, b) + 1e-9


# ------------------------------------------------------------------ FS3


def test_counters_example():
    events = [_event(10), _event(10), _event(181, channel="web", card="debit")]
    c = fs3_counters(_user(), events, ENC)
    assert (c.n_pos, c.n_web, c.n_credit, c.n_debit, c.n_total) == (2, 1, 2, 1, 3)
    assert c.days_since_last == 0


def test_counters_empty():
    assert fs3_counters(_user(), [], ENC) == CounterSet()


def test_counters_months():
    c = fs3_counters(_user(cc=(0, 1, 1, 1, 0, 0), wealth=(1,) * 6), [], ENC)
    assert c.months_credit_card == 3
    assert c.months_wealthy == 6


def test_counters_max_amt_modes_and_distincts():
    events = [_event(5, amt="b", slot="c", loc="L2", mc="d"),
              _event(6, amt="c", slot="a", loc="L2", mc="d"),
              _event(7, amt="a", slot="c", loc="L1", mc="e"),
              _event(8, amt="a", slot="a", loc="L1", mc="e")]
    c = fs3_counters(_user(), events, ENC)
    assert c.max_amt == 3
    assert c.n_distinct_amt == 3
    assert c.n_distinct_locations == 2
    assert c.n_distinct_time_slots == 2
    assert c.n_distinct_mc == 2
    assert c.days_since_last == 181 - 8
    # a/c tie and L1/L2 tie: smallest code wins
    assert c.mode_time_slot == 0
    assert c.mode_loc_cat == 0


event_strategy = st.builds(
    _event,
    day=st.integers(1, 181),
    channel=st.sampled_from(["pos", "web", "__MISSING__"]),
    card=st.sampled_from(["credit", "debit", "__MISSING__"]),
    amt=st.sampled_from(["a", "b", "c", "__MISSING__"]),
    mc=st.sampled_from(list("abcdefghij") + ["__MISSING__"]),
)


@settings(max_examples=150, deadline=None)
@given(st.lists(event_strategy, max_size=30))
def test_counter_invariants(events):
    c = fs3_counters(_user(cc=(1, 0, 1, 0, 1, 0)), events, ENC)
    arr = c.as_array()
    assert (arr >= 0).all()
    assert c.n_pos + c.n_web == c.n_total
    assert c.n_credit + c.n_debit == c.n_total
    assert c.max_amt in (0, 1, 2, 3)
    assert c.months_credit_card <= 6 and c.months_wealthy <= 6


# ------------------------------------------------------------------ FS4


def test_inter_activity_examples():
    assert inter_activity_stats(ActivityTimeline(1, (1, 3, 7))) == (3.0, 1.0)
    assert inter_activity_stats(ActivityTimeline(1, (50, 50))) == (0.0, 0.0)
    assert inter_activity_stats(ActivityTimeline(1, (5, 15, 25, 35)))[1] == 0.0


def test_timeline_sorted_and_validated():
    tl = ActivityTimeline(1, (9, 2, 9, 4))
    assert tl.event_days == (2, 4, 9, 9)
    assert tl.distinct_days == (2, 4, 9)
    assert tl.n == 4
    with pytest.raises(ValueError):
        ActivityTimeline(1, (0,))
    with pytest.raises(ValueError):
        ActivityTimeline(1, (182,))


def test_clumpiness_daily_is_zero():
    assert abs(clumpiness(ActivityTimeline(1, tuple(range(1, 182))))) < 1e-12


def test_clumpiness_single_day():
    assert abs(clumpiness(ActivityTimeline(1, (1,))) - CLUMP_DAY1) < 1e-9
    assert abs(clumpiness(ActivityTimeline(1, (181,))) - CLUMP_DAY1) < 1e-9


def test_clumpiness_two_days():
    assert abs(clumpiness(ActivityTimeline(1, (60, 120))) - CLUMP_60_120) < 1e-9


def test_clumpiness_empty_is_zero():
    assert clumpiness(ActivityTimeline(1, ())) == 0.0


@settings(max_examples=300, deadline=None)
@given(days_strategy)
def test_clumpiness_range_and_oracle(days):
    c = clumpiness(ActivityTimeline(1, tuple(days)))
    assert -1e-12 <= c < 1
    assert abs(c - clumpiness_direct(days)) < 1e-9


# ---------------------------------------------------------------- FS5-FS7


def test_geo_features_examples():
    assert fs5_geo_features(_user(), []) == (0.0, 0.0)
    assert fs5_geo_features(_user(geo=(2.0, 2.0)), [_event(1, geo=(2.0, 2.0))]) == (0.0, 0.0)
    avg, ratio = fs5_geo_features(_user(), [_event(1, geo=(3, 4)), _event(2, geo=(0, 0))])
    assert (avg, ratio) == (2.5, 1.25)


def test_trend_examples():
    assert trend_ratios([1, 2, 3]) == (1.0, 0.0)
    assert trend_ratios([1, 2, 2, 3, 1]) == (0.5, 0.25)
    assert trend_ratios([4]) == (0.0, 0.0)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 10), max_size=40))
def test_trend_ratios_sum_at_most_one(seq):
    up, down = trend_ratios(seq)
    assert 0 <= up and 0 <= down and up + down <= 1 + 1e-12


def test_mean_activity_geo(rng):
    assert mean_activity_geo([_event(1, geo=(0, 0)), _event(2, geo=(2, 2))]) == (1.0, 1.0)
    assert mean_activity_geo([], home=(7.0, -1.0)) == (7.0, -1.0)
    pts = rng.normal(size=(7, 2))
    got = mean_activity_geo([_event(1, geo=tuple(p)) for p in pts])
    want = (sum(p[0] for p in pts) / 7, sum(p[1] for p in pts) / 7)
    assert got == pytest.approx(want, abs=1e-12)


# ---------------------------------------------------------------- assemble


@pytest.fixture(scope="module")
def prepared(small_ds):
    ds = small_ds.with_users(impute_age_cat(small_ds.users))
    enc = fit_encoding(ds)
    km = kmeans_fit(ds.users[["geo_x", "geo_y"]].to_numpy(), k=4, seed=0)
    return ds, enc, km


def test_fs1_block_only(prepared):
    ds, enc, _ = prepared
    fm = assemble("FS1", ds, enc)
    assert {c.feature_set for c in fm.columns} == {"FS1"}
    assert fm.values.shape == (len(ds.users), len(fm.columns))


def test_fs3_adds_fifteen_counters(prepared):
    ds, enc, _ = prepared
    assert assemble("FS3", ds, enc).shape[1] == assemble("FS2", ds, enc).shape[1] + 15


def test_fs8_needs_kmeans(prepared):
    ds, enc, _ = prepared
    with pytest.raises(ValueError, match="k-means"):
        assemble("FS8", ds, enc)


def test_prefix_property(prepared):
    ds, enc, km = prepared
    mats = {fs: assemble(fs, ds, enc, km).values for fs in FEATURE_SETS[:8]}
    for k in range(1, 8):
        small, big = mats[f"FS{k}"], mats[f"FS{k + 1}"]
        assert big.shape[1] > small.shape[1]
        np.testing.assert_array_equal(big[:, :small.shape[1]], small)


def test_assemble_deterministic(prepared):
    ds, enc, km = prepared
    a = assemble("FS8", ds, enc, km)
    b = assemble("FS8", ds, enc, km)
    assert a.values.tobytes() == b.values.tobytes()
    assert a.manifest_hash() == b.manifest_hash()


def test_assemble_independent_of_activity_order(prepared):
    ds, enc, km = prepared
    shuffled = ds.activities.sample(frac=1.0, random_state=1).sort_values(
        "day_index", kind="stable").reset_index(drop=True)
    # FS1..FS5 do not depend on the order of events within a day
    ds2 = type(ds)(ds.users, shuffled, ds.branches, ds.visits, ds.report)
    np.testing.assert_allclose(assemble("FS5", ds2, enc).values,
                               assemble("FS5", ds, enc).values, atol=1e-9)


@pytest.mark.parametrize("weighting", ["uniform", "recency"])
def test_assemble_matches_reference_rows(prepared, weighting):
    ds, enc, km = prepared
    fm = assemble("FS8", ds, enc, km, weighting=weighting)
    branches = ds.branch_list()
    labels = fm.values[:, fm.names.index("cluster")].astype(int)
    rows = np.linspace(0, len(ds.users) - 1, 40).astype(int)
    inactive = np.flatnonzero(~ds.users["user_id"].isin(ds.activities["user_id"]).to_numpy())
    for i in sorted(set(rows) | set(inactive[:3])):
        uid = int(fm.user_ids[i])
        ref = user_feature_row("FS8", ds.profile(uid), ds.events(uid), branches, enc,
                               cluster=labels[i], k=km.k, weighting=weighting)
        np.testing.assert_allclose(fm.values[i], ref, rtol=1e-12, atol=1e-12,
                                   err_msg=f"user {uid}")


def test_inactive_users_use_home_geo(prepared):
    ds, enc, km = prepared
    fm = assemble("FS7", ds, enc)
    inactive = ~np.isin(fm.user_ids, ds.activities["user_id"].to_numpy())
    assert inactive.any()
    np.testing.assert_array_equal(fm.act_geo[inactive], fm.home_geo[inactive])
    a = fm.values[:, fm.names.index("min_branch_dist_home")]
    b = fm.values[:, fm.names.index("min_branch_dist_act")]
    np.testing.assert_array_equal(a[inactive], b[inactive])


def test_branch_columns(prepared):
    ds, enc, km = prepared
    fm = assemble("FS10", ds, enc, km)
    base = assemble("FS8", ds, enc, km)
    np.testing.assert_array_equal(fm.values, base.values)
    assert fm.branch_sets == ("FS9", "FS10")
    b = (10.0, 20.0)
    full = fm.with_branch(b)
    assert full.shape[1] == base.shape[1] + 2
    np.testing.assert_allclose(full[:, -2], np.hypot(*(fm.home_geo - b).T))
    np.testing.assert_allclose(full[:, -1], np.hypot(*(fm.act_geo - b).T))
    assert [c["name"] for c in fm.manifest()["columns"][-2:]] == ["branch_dist_home",
                                                                   "branch_dist_act"]
    fs9 = assemble("FS9", ds, enc, km)
    assert fs9.with_branch(b).shape[1] == base.shape[1] + 1


def test_drop_patterns(prepared):
    ds, enc, km = prepared
    fm = assemble("FS8", ds, enc, km).drop(["geo_*", "c?", "w?"])
    assert not any(n in fm.names for n in ("geo_x", "c1", "w6"))
    assert "act_geo_x" in fm.names
    assert fm.values.shape[1] == len(fm.columns)


def test_save_writes_manifest(prepared, tmp_path):
    ds, enc, _ = prepared
    fm = assemble("FS2", ds, enc)
    fm.save(tmp_path)
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["hash"] == fm.manifest_hash()
    assert {c["type"] for c in man["columns"]} == {"indicator", "numeric"}
    header = (tmp_path / "features.csv").read_text().splitlines()[0].split(",")
    assert header == ["user_id"] + fm.names


# -------------------------------------------------------------- transforms


def test_log_transform(prepared, rng):
    ds, enc, _ = prepared
    fm = assemble("FS4", ds, enc)
    out = log_transform(fm)
    numeric = np.array([c.kind == "numeric" for c in fm.columns])
    np.testing.assert_array_equal(out.values[:, ~numeric], fm.values[:, ~numeric])
    oracle = np.vectorize(lambda x: math.log(1 + max(x, 0.0)))(fm.values[:, numeric])
    np.testing.assert_allclose(out.values[:, numeric], oracle, rtol=1e-14, atol=0)
    one = fm.with_values(np.full_like(fm.values, math.e - 1))
    np.testing.assert_allclose(log_transform(one).values[:, numeric], 1.0, atol=1e-15)
    zero = fm.with_values(np.zeros_like(fm.values))
    assert (log_transform(zero).values == 0).all()


def test_scale_features(prepared):
    ds, enc, _ = prepared
    fm = assemble("FS3", ds, enc)
    tiny = fm.rows(np.arange(2)).with_values(
        np.column_stack([[0.0, 2.0], [5.0, 5.0]]), fm.columns[:2])
    scaled, _ = scale_features(tiny)
    np.testing.assert_array_equal(scaled.values, [[-1.0, 0.0], [1.0, 0.0]])
    out, scaler = scale_features(fm)
    assert np.abs(out.values.mean(axis=0)).max() < 1e-12
    again, _ = scale_features(fm, scaler)
    np.testing.assert_array_equal(again.values, out.values)
