"""Class-weighted CART trees grown on a counter-based seed stream."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

# split decreases within this margin of the best are ties
TIE_EPS = 1e-12


@dataclass(frozen=True)
class Hyperparams:
    class_weights: object = (1.0, 20.0)     # (w0, w1) or "balanced"
    n_trees: int = 15
    max_depth: int | None = 15
    min_samples_split: int = 2
    min_samples_leaf: int = 2
    max_features: object = "sqrt"           # "sqrt" | "all" | int
    bootstrap: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0 or None")
        cw = self.class_weights
        if cw != "balanced":
            cw = tuple(float(w) for w in cw)
            if len(cw) != 2 or min(cw) < 0:
                raise ValueError("class_weights must be 'balanced' or two non-negative weights")
            object.__setattr__(self, "class_weights", cw)
        if self.max_features not in ("sqrt", "all") and not (
                isinstance(self.max_features, int) and self.max_features >= 1):
            raise ValueError("max_features must be 'sqrt', 'all' or a positive count")

    def n_features_per_split(self, n_features: int) -> int:
        if self.max_features == "all":
            return n_features
        if self.max_features == "sqrt":
            return max(1, int(math.sqrt(n_features)))
        return min(int(self.max_features), n_features)

    def weights_for(self, y: np.ndarray) -> np.ndarray:
        """Per-class weights; "balanced" gives total / (2 * class count)."""
        if self.class_weights == "balanced":
            counts = np.bincount(y, minlength=2).astype(float)
            with np.errstate(divide="ignore"):
                w = np.where(counts > 0, len(y) / (2.0 * counts), 0.0)
            return w
        return np.array(self.class_weights, dtype=float)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["class_weights"] = list(self.class_weights) if self.class_weights != "balanced" \
            else "balanced"
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparams":
        d = dict(d)
        cw = d.get("class_weights", (1.0, 20.0))
        d["class_weights"] = cw if cw == "balanced" else tuple(cw)
        return cls(**d)


def weighted_gini(counts) -> float:
    """1 - sum p_i^2 over weighted class totals."""
    counts = np.asarray(counts, dtype=float)
    total = counts.sum()
    if not total > 0:
        raise ValueError("weighted_gini needs a positive total weight")
    p = counts / total
    return float(1.0 - np.sum(p * p))


def _gini2(w0, w1):
    tot = w0 + w1
    with np.errstate(invalid="ignore", divide="ignore"):
        p0 = np.where(tot > 0, w0 / tot, 0.0)
        p1 = np.where(tot > 0, w1 / tot, 0.0)
    return 1.0 - p0 * p0 - p1 * p1


def _midpoint(a, b):
    thr = (a + b) / 2.0
    # adjacent floats: keep the threshold strictly below b
    return np.where(thr == b, a, thr)


def best_split(X, y, sample_weight, features, min_samples_leaf: int = 1):
    """Exhaustive weighted-Gini split over ``features``.

    Candidate thresholds are midpoints of consecutive distinct values.  The
    winner maximizes the impurity decrease; near-ties within ``TIE_EPS`` go to
    the lower feature index, then the lower threshold.  Returns
    ``(feature, threshold, decrease)`` or None.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    w = np.asarray(sample_weight, dtype=float)
    n = len(y)
    if n < 2:
        return None
    w1_all = w * (y == 1)
    w0_all = w * (y == 0)
    W0, W1 = w0_all.sum(), w1_all.sum()
    W = W0 + W1
    if not W > 0:
        return None
    parent = float(_gini2(W0, W1))
    cands = []       # (feature, threshold array, decrease array)
    for f in sorted(int(f) for f in features):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        c0 = np.cumsum(w0_all[order])[:-1]
        c1 = np.cumsum(w1_all[order])[:-1]
        nl = np.arange(1, n)
        ok = (xs[:-1] < xs[1:]) & (nl >= min_samples_leaf) & (n - nl >= min_samples_leaf)
        if not ok.any():
            continue
        pos = np.flatnonzero(ok)
        l0, l1 = c0[pos], c1[pos]
        r0, r1 = W0 - l0, W1 - l1
        dec = parent - ((l0 + l1) / W) * _gini2(l0, l1) - ((r0 + r1) / W) * _gini2(r0, r1)
        cands.append((f, _midpoint(xs[pos], xs[pos + 1]), dec))
    if not cands:
        return None
    best = max(float(d.max()) for _, _, d in cands)
    if not best > TIE_EPS:
        return None
    for f, thr, dec in cands:
        hit = np.flatnonzero(dec >= best - TIE_EPS)
        if hit.size:
            # thresholds are increasing along the sorted axis
            i = hit[0]
            return f, float(thr[i]), float(dec[i])
    return None


class DecisionTree:
    """Flat-array tree.  Leaves have ``feature == -1``; ``value`` holds weighted class totals."""

    def __init__(self, feature, threshold, left, right, value):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=float).reshape(-1, 2)
        # tie goes to class 1
        self.leaf_class = (self.value[:, 1] >= self.value[:, 0]).astype(np.int64)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def depth(self) -> int:
        def rec(i):
            if self.feature[i] < 0:
                return 0
            return 1 + max(rec(self.left[i]), rec(self.right[i]))
        return rec(0)

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        node = np.zeros(len(X), dtype=np.int64)
        active = np.flatnonzero(self.feature[node] >= 0)
        while active.size:
            nd = node[active]
            go_left = X[active, self.feature[nd]] <= self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
            active = active[self.feature[node[active]] >= 0]
        return node

    def predict(self, X) -> np.ndarray:
        return self.leaf_class[self.apply(X)]

    def to_nested(self, i: int = 0) -> dict:
        if self.feature[i] < 0:
            return {"v": [float(x) for x in self.value[i]]}
        return {"f": int(self.feature[i]), "t": float(self.threshold[i]),
                "v": [float(x) for x in self.value[i]],
                "l": self.to_nested(int(self.left[i])), "r": self.to_nested(int(self.right[i]))}

    @classmethod
    def from_nested(cls, root: dict) -> "DecisionTree":
        feature, threshold, left, right, value = [], [], [], [], []

        def add(node):
            i = len(feature)
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(node["v"])
            if "f" in node:
                feature[i] = int(node["f"])
                threshold[i] = float(node["t"])
                left[i] = add(node["l"])
                right[i] = add(node["r"])
            return i

        if not isinstance(root, dict) or "v" not in root:
            raise ValueError("malformed tree node")
        add(root)
        return cls(feature, threshold, left, right, value)

    def __eq__(self, other):
        return (isinstance(other, DecisionTree)
                and np.array_equal(self.feature, other.feature)
                and np.array_equal(self.threshold, other.threshold)
                and np.array_equal(self.left, other.left)
                and np.array_equal(self.right, other.right)
                and np.array_equal(self.value, other.value))


def node_rng(seed: int, tree_index: int, node_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(tree_index, node_index)))


def grow_tree(X, y, params: Hyperparams, tree_index: int = 0,
              class_weights: np.ndarray | None = None) -> DecisionTree:
    """Grow one tree depth-first.

    Node numbers (creation order) key the per-node feature draw, so growth is
    reproducible from ``(params.seed, tree_index)`` alone.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if len(y) == 0:
        raise ValueError("cannot grow a tree on zero rows")
    cw = params.weights_for(y) if class_weights is None else np.asarray(class_weights, float)
    w = cw[y]
    n_feat = X.shape[1]
    k = params.n_features_per_split(n_feat)
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append((float(w[idx][y[idx] == 0].sum()), float(w[idx][y[idx] == 1].sum())))
        return len(feature) - 1

    root = new_node(np.arange(len(y)))
    stack = [(root, np.arange(len(y)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        v0, v1 = value[node]
        if params.max_depth is not None and depth >= params.max_depth:
            continue
        if len(idx) < params.min_samples_split or v0 == 0 or v1 == 0:
            continue
        if k >= n_feat:
            feats = np.arange(n_feat)
        else:
            feats = np.sort(node_rng(params.seed, tree_index, node).choice(n_feat, k, replace=False))
        split = best_split(X[idx], y[idx], w[idx], feats, params.min_samples_leaf)
        if split is None:
            continue
        f, thr, _ = split
        mask = X[idx, f] <= thr
        li = new_node(idx[mask])
        ri = new_node(idx[~mask])
        feature[node], threshold[node], left[node], right[node] = f, thr, li, ri
        # left subtree expanded first
        stack.append((ri, idx[~mask], depth + 1))
        stack.append((li, idx[mask], depth + 1))
    return DecisionTree(feature, threshold, left, right, value)
