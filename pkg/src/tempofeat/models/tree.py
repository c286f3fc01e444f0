"""CART regression tree with exact greedy squared-error splits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit


@dataclass
class DecisionTree:
    """Flat array representation; node 0 is the root, ``feature == -1`` marks a leaf.

    Rows go left when ``x[feature] <= threshold``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray
    max_depth: int | None = None
    min_samples_leaf: int = 1

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, X) -> np.ndarray:
        """Leaf index reached by every row of ``X``."""
        X = np.asarray(X, dtype=np.float64)
        node = np.zeros(len(X), dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.flatnonzero(active)
            nd = node[idx]
            go_left = X[idx, self.feature[nd]] <= self.threshold[nd]
            node[idx] = np.where(go_left, self.left[nd], self.right[nd])
            active[idx] = self.feature[node[idx]] >= 0
        return node

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "n_samples": self.n_samples.tolist(),
            "max_depth": self.max_depth,
            "min_samples_leaf": self.min_samples_leaf,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionTree":
        return cls(
            feature=np.asarray(d["feature"], dtype=np.int64),
            threshold=np.asarray(d["threshold"], dtype=np.float64),
            left=np.asarray(d["left"], dtype=np.int64),
            right=np.asarray(d["right"], dtype=np.int64),
            value=np.asarray(d["value"], dtype=np.float64),
            n_samples=np.asarray(d["n_samples"], dtype=np.int64),
            max_depth=d["max_depth"],
            min_samples_leaf=d["min_samples_leaf"],
        )


def presort(X) -> np.ndarray:
    """Column-wise stable argsort, shape ``(n_features, n_rows)``; reusable across fits."""
    X = np.asarray(X, dtype=np.float64)
    return np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)


def best_split_numpy(Xt, y, w, order, cols, min_leaf, centre=0.0):
    """Best (gain, feature, threshold) over ``cols`` for the rows in ``order``.

    ``order`` is ``(n_features, m)``: the node's rows sorted by each feature.
    Returns None when no admissible split exists. Vectorised reference for
    the compiled scan used by :func:`tree_fit`.
    """
    m = order.shape[1]
    if m < 2 * min_leaf:
        return None
    oc = order[cols]
    xs = Xt[cols[:, None], oc]
    ws = w[oc]
    wy = ws * (y[oc] - centre)
    cw = np.cumsum(ws, axis=1)[:, :-1]
    cy = np.cumsum(wy, axis=1)[:, :-1]
    W = ws[0].sum()
    Y = wy[0].sum()
    wr = W - cw
    yr = Y - cy
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = cy * cy / cw + yr * yr / wr - Y * Y / W
    valid = xs[:, :-1] < xs[:, 1:]
    if min_leaf > 1:
        pos = np.arange(1, m)
        valid &= (pos >= min_leaf) & (m - pos >= min_leaf)
    valid &= (cw > 0) & (wr > 0)
    gain = np.where(valid, gain, -np.inf)
    flat = int(np.argmax(gain))
    best = gain.flat[flat]
    if not np.isfinite(best):
        return None
    j, i = divmod(flat, m - 1)
    lo, hi = xs[j, i], xs[j, i + 1]
    thr = lo + (hi - lo) / 2.0
    if not lo <= thr < hi:
        thr = lo
    return float(best), int(cols[j]), float(thr)


@njit(cache=True)
def _scan(Xt, y, w, order, cols, min_leaf, centre):
    m = order.shape[1]
    W = 0.0
    Y = 0.0
    for i in range(m):
        r = order[0, i]
        W += w[r]
        Y += w[r] * (y[r] - centre)
    base = Y * Y / W
    best = -np.inf
    best_f = -1
    best_thr = 0.0
    for jj in range(cols.shape[0]):
        j = cols[jj]
        cw = 0.0
        cy = 0.0
        for i in range(m - 1):
            r = order[j, i]
            cw += w[r]
            cy += w[r] * (y[r] - centre)
            if i + 1 < min_leaf or m - i - 1 < min_leaf:
                continue
            lo = Xt[j, r]
            hi = Xt[j, order[j, i + 1]]
            if not lo < hi:
                continue
            wr = W - cw
            if cw <= 0.0 or wr <= 0.0:
                continue
            yr = Y - cy
            g = cy * cy / cw + yr * yr / wr - base
            if g > best:
                best = g
                best_f = j
                thr = lo + (hi - lo) / 2.0
                if not (lo <= thr and thr < hi):
                    thr = lo
                best_thr = thr
    return best, best_f, best_thr


@njit(cache=True)
def _partition(order, goes_left, m_left):
    d, m = order.shape
    lo = np.empty((d, m_left), dtype=order.dtype)
    ro = np.empty((d, m - m_left), dtype=order.dtype)
    for j in range(d):
        a = 0
        b = 0
        for i in range(m):
            r = order[j, i]
            if goes_left[r]:
                lo[j, a] = r
                a += 1
            else:
                ro[j, b] = r
                b += 1
    return lo, ro


def _best_split(Xt, y, w, order, cols, min_leaf, centre=0.0):
    if order.shape[1] < 2 * min_leaf:
        return None
    gain, f, thr = _scan(Xt, y, w, order, cols, min_leaf, centre)
    if f < 0 or not np.isfinite(gain):
        return None
    return float(gain), int(f), float(thr)


def tree_fit(X, y, sample_weight=None, max_depth: int | None = 3, min_samples_leaf: int = 1,
             max_features: int | None = None, seed=None, order=None) -> DecisionTree:
    """Grow a regression tree greedily by squared-error reduction.

    :param sample_weight: non-negative row weights (bootstrap counts for forests);
        rows with zero weight are ignored.
    :param max_features: number of features drawn without replacement at every
        node; None uses all of them.
    :param order: optional result of :func:`presort` for ``X``.

    Leaf values are weighted means. A node becomes a leaf when its targets are
    constant, a constraint binds, or no split improves the squared error.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or len(X) == 0 or len(X) != len(y):
        raise ValueError("tree_fit needs a non-empty 2-D X with len(X) == len(y)")
    n, d = X.shape
    if d == 0:
        raise ValueError("tree_fit needs at least one feature column")
    w = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    if order is None:
        order = presort(X)
    order = np.ascontiguousarray(order, dtype=np.int64)
    if (w < 0).any():
        raise ValueError("sample weights must be non-negative")
    if (w == 0).any():
        mask = w > 0
        order = order[mask[order]].reshape(d, int(mask.sum()))
    if order.shape[1] == 0:
        raise ValueError("tree_fit: all sample weights are zero")
    Xt = np.ascontiguousarray(X.T)
    rng = np.random.default_rng(seed)
    min_leaf = max(int(min_samples_leaf), 1)
    all_cols = np.arange(d, dtype=np.int64)

    feature, threshold, left, right, value, count = [], [], [], [], [], []

    def new_node(rows):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        ws, ys = w[rows], y[rows]
        if ys.max() == ys.min():
            value.append(float(ys[0]))  # exact, no rounding from the weighted sum
        else:
            value.append(float(np.dot(ws, ys) / ws.sum()))
        count.append(len(rows))
        return len(feature) - 1

    stack = [(new_node(order[0]), order, 0)]
    while stack:
        node, o, depth = stack.pop()
        rows = o[0]
        if max_depth is not None and depth >= max_depth:
            continue
        yn = y[rows]
        if yn.max() == yn.min():
            continue
        if max_features is not None and max_features < d:
            cols = np.sort(rng.choice(d, size=max_features, replace=False)).astype(np.int64)
        else:
            cols = all_cols
        # centring on the node mean keeps the gain arithmetic well conditioned
        found = _best_split(Xt, y, w, o, cols, min_leaf, centre=value[node])
        if found is None:
            continue
        gain, f, thr = found
        sse = float(np.dot(w[rows], (yn - value[node]) ** 2))
        if gain <= 1e-12 * sse:
            continue
        goes_left = Xt[f] <= thr
        m_left = int(goes_left[rows].sum())
        if max_depth is not None and depth + 1 >= max_depth:
            # children are leaves; only their row lists are needed
            lo, ro = _partition(o[:1], goes_left, m_left)
        else:
            lo, ro = _partition(o, goes_left, m_left)
        feature[node] = f
        threshold[node] = thr
        li = new_node(lo[0])
        ri = new_node(ro[0])
        left[node], right[node] = li, ri
        stack.append((ri, ro, depth + 1))
        stack.append((li, lo, depth + 1))

    return DecisionTree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        value=np.asarray(value, dtype=np.float64),
        n_samples=np.asarray(count, dtype=np.int64),
        max_depth=max_depth,
        min_samples_leaf=min_leaf,
    )
