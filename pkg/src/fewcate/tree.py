"""Depth-limited least-squares regression trees with exact greedy splits.

Feature columns are presorted once per ensemble fit and reused by every
tree; each node then scans the presorted columns through the split kernel
selected in ``_split``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fewcate._split import scan_split

GAIN_EPS = 1e-12  # relative threshold below which a split is not worth taking


@dataclass(frozen=True)
class PresortedX:
    """Per-feature ascending sort of a training matrix, shared across trees."""

    X: np.ndarray
    orders: tuple          # per feature: row indices in ascending value order
    sorted_values: tuple   # per feature: the column values in that order


def presort(X) -> PresortedX:
    X = np.ascontiguousarray(X, dtype=float)
    orders, values = [], []
    for f in range(X.shape[1]):
        o = np.argsort(X[:, f], kind="stable").astype(np.intp)
        orders.append(np.ascontiguousarray(o))
        values.append(np.ascontiguousarray(X[o, f]))
    return PresortedX(X, tuple(orders), tuple(values))


class RegressionTree:
    """Binary regression tree, squared-error splits, midpoint thresholds."""

    def __init__(self, max_depth: int = 3, min_leaf: int = 5):
        self.max_depth = max_depth
        self.min_leaf = min_leaf

    def fit(self, X, y, presorted: PresortedX | None = None):
        ps = presorted if presorted is not None else presort(X)
        y = np.ascontiguousarray(y, dtype=float)
        n, d = ps.X.shape
        feature, threshold, left, right, value = [], [], [], [], []
        self.train_prediction_ = np.empty(n)
        in_node = np.zeros(n, dtype=np.uint8)

        def new_node():
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(0.0)
            return len(feature) - 1

        stack = [(np.arange(n, dtype=np.intp), 0, new_node())]
        while stack:
            idx, depth, nid = stack.pop()
            n_node = idx.shape[0]
            node_sum = float(np.sum(y[idx]))
            value[nid] = node_sum / n_node
            if depth >= self.max_depth or n_node < 2 * self.min_leaf:
                self.train_prediction_[idx] = value[nid]
                continue
            in_node.fill(0)
            in_node[idx] = 1
            parent_score = node_sum * node_sum / n_node
            best_score, best_f, best_lo, best_hi = -np.inf, -1, 0.0, 0.0
            for f in range(d):
                score, pos, lo, hi = scan_split(
                    ps.sorted_values[f], y, ps.orders[f], in_node, n_node, self.min_leaf
                )
                if score > best_score:
                    best_score, best_f, best_lo, best_hi = score, f, lo, hi
            gain = best_score - parent_score
            if best_f < 0 or gain <= GAIN_EPS * max(1.0, abs(parent_score)):
                self.train_prediction_[idx] = value[nid]
                continue
            thr = 0.5 * (best_lo + best_hi)
            if thr >= best_hi:  # adjacent floats: keep the rule x <= thr consistent
                thr = best_lo
            go_left = ps.X[idx, best_f] <= thr
            feature[nid] = best_f
            threshold[nid] = thr
            lid, rid = new_node(), new_node()
            left[nid], right[nid] = lid, rid
            stack.append((idx[go_left], depth + 1, lid))
            stack.append((idx[~go_left], depth + 1, rid))

        self.feature_ = np.asarray(feature, dtype=np.intp)
        self.threshold_ = np.asarray(threshold, dtype=float)
        self.left_ = np.asarray(left, dtype=np.intp)
        self.right_ = np.asarray(right, dtype=np.intp)
        self.value_ = np.asarray(value, dtype=float)
        return self

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        node = np.zeros(X.shape[0], dtype=np.intp)
        for _ in range(self.max_depth):
            feat = self.feature_[node]
            active = np.nonzero(feat >= 0)[0]
            if active.size == 0:
                break
            sub = node[active]
            go_left = X[active, feat[active]] <= self.threshold_[sub]
            node[active] = np.where(go_left, self.left_[sub], self.right_[sub])
        return self.value_[node]
