"""CART classification trees for binary labels.

Every node draws its candidate-feature order from a hash of the tree key and
the node's position (its left/right path from the root), not from a shared
sequential generator. Growth limits therefore never change what is found at
a node, only which nodes get expanded:

* without ``max_leaf_nodes`` every node that passes ``max_depth`` and
  ``min_samples_split`` and has a valid split is expanded;
* with ``max_leaf_nodes`` expansion is best-first by impurity decrease (ties
  go to the shallower, then leftmost node) until the leaf budget is used.

So a limited tree is exactly a pruning of the fully grown tree with the same
key, which lets a hyperparameter grid be evaluated from full trees only
(:func:`limited_leaves`).
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from ..errors import EmptyData, InconsistentDims, InvalidConfig

__all__ = ["ForestConfig", "Tree", "fit_tree", "predict_tree", "tree_proba", "check_data",
           "class_weights", "decision_paths", "expansion_ranks", "limited_leaves"]

_MASK = (1 << 64) - 1


def _mix(z: int) -> int:
    """splitmix64 finaliser."""
    z = (z + 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def _child_key(key: int, side: int) -> int:
    return _mix(key ^ ((side + 1) * 0xD1B54A32D192ED03 & _MASK))


def _feature_order(key: int, d: int) -> list[int]:
    return sorted(range(d), key=lambda f: _mix(key ^ (f * 0x9E3779B97F4A7C15 & _MASK)))


@dataclass(frozen=True)
class ForestConfig:
    """Hyperparameters shared by trees and forests.

    ``max_features`` of ``None`` means ``floor(sqrt(d))`` for forests and all
    features for a standalone :func:`fit_tree`.
    """

    n_estimators: int = 100
    criterion: str = "gini"
    max_depth: int | None = None
    max_leaf_nodes: int | None = None
    class_weight: str | None = None
    min_samples_split: int = 2
    bootstrap: bool = True
    seed: int = 0
    max_features: int | None = None

    def validate(self) -> None:
        if self.n_estimators < 1:
            raise InvalidConfig("n_estimators must be >= 1")
        if self.criterion not in ("gini", "entropy"):
            raise InvalidConfig(f"unknown criterion {self.criterion!r}")
        if self.max_depth is not None and self.max_depth < 1:
            raise InvalidConfig("max_depth must be >= 1")
        if self.max_leaf_nodes is not None and self.max_leaf_nodes < 2:
            raise InvalidConfig("max_leaf_nodes must be >= 2")
        if self.class_weight not in (None, "balanced"):
            raise InvalidConfig(f"unknown class_weight {self.class_weight!r}")
        if self.min_samples_split < 2:
            raise InvalidConfig("min_samples_split must be >= 2")
        if self.max_features is not None and self.max_features < 1:
            raise InvalidConfig("max_features must be >= 1")

    def describe(self) -> str:
        return (f"n_estimators={self.n_estimators} criterion={self.criterion} "
                f"max_depth={self.max_depth} max_leaf_nodes={self.max_leaf_nodes} "
                f"class_weight={self.class_weight} min_samples_split={self.min_samples_split}")


@dataclass
class Tree:
    """Flat node arrays; ``left[k] == -1`` marks a leaf and ``value`` is P(class 1).

    ``split_feature``/``split_threshold``/``gain`` describe the best split
    found at each node even when the node was left unexpanded (feature -1
    when none exists); ``n_samples`` counts distinct training rows.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    node_depth: np.ndarray
    n_samples: np.ndarray
    gain: np.ndarray
    order: list
    n_features: int = 0

    @property
    def n_nodes(self) -> int:
        return len(self.value)

    @property
    def n_leaves(self) -> int:
        return int(np.count_nonzero(self.left < 0))

    @property
    def depth(self) -> int:
        return int(self.node_depth.max())

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(), "threshold": self.threshold.tolist(),
            "left": self.left.tolist(), "right": self.right.tolist(),
            "value": self.value.tolist(), "node_depth": self.node_depth.tolist(),
            "n_samples": self.n_samples.tolist(), "gain": self.gain.tolist(),
            "order": [str(o) for o in self.order], "n_features": self.n_features,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        ints = {k: np.array(d[k], dtype=np.int64)
                for k in ("feature", "left", "right", "node_depth", "n_samples")}
        return cls(ints["feature"], np.array(d["threshold"], dtype=np.float64),
                   ints["left"], ints["right"], np.array(d["value"], dtype=np.float64),
                   ints["node_depth"], ints["n_samples"], np.array(d["gain"], dtype=np.float64),
                   [int(o) for o in d["order"]], d["n_features"])


def check_data(X, y) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
        raise EmptyData(f"need a non-empty 2D feature matrix, got shape {X.shape}")
    if y.shape != (X.shape[0],):
        raise InconsistentDims(f"{X.shape[0]} rows but {y.shape} labels")
    if not np.isin(y, (0, 1)).all():
        raise InvalidConfig("labels must be 0 or 1")
    if not np.isfinite(X).all():
        raise InvalidConfig("features must be finite")
    return X, y.astype(np.int64)


def class_weights(y: np.ndarray, mode: str | None) -> np.ndarray:
    """Per-class weights; ``balanced`` gives ``n / (2 n_c)``."""
    if mode is None:
        return np.ones(2)
    n = len(y)
    counts = np.bincount(y, minlength=2)
    return np.array([n / (2.0 * c) if c else 0.0 for c in counts])


def _impurity(w0, w1, criterion):
    """Node impurity times node weight, vectorised over candidate splits."""
    tot = w0 + w1
    with np.errstate(divide="ignore", invalid="ignore"):
        if criterion == "gini":
            out = tot - (w0 * w0 + w1 * w1) / tot
        else:
            out = np.zeros_like(tot)
            for w in (w0, w1):
                p = w / tot
                out = out - np.where(w > 0, w * np.log2(np.where(w > 0, p, 1.0)), 0.0)
    return np.where(tot > 0, out, 0.0)


class _Builder:
    def __init__(self, X, w0, w1, criterion, max_features):
        self.X, self.w0, self.w1 = X, w0, w1
        self.criterion = criterion
        self.d = X.shape[1]
        self.mf = min(max_features, self.d)
        self.cols = {k: [] for k in ("feature", "threshold", "left", "right", "value", "depth",
                                     "n", "gain", "sf", "st", "order", "idx")}

    def search(self, idx, feats):
        Xn = self.X[np.ix_(idx, feats)]
        order = np.argsort(Xn, axis=0, kind="stable")
        xs = np.take_along_axis(Xn, order, axis=0)
        c0 = np.cumsum(self.w0[idx][order], axis=0)
        c1 = np.cumsum(self.w1[idx][order], axis=0)
        l0, l1 = c0[:-1], c1[:-1]
        child = (_impurity(l0, l1, self.criterion)
                 + _impurity(c0[-1] - l0, c1[-1] - l1, self.criterion))
        valid = xs[:-1] < xs[1:]
        if not valid.any():
            return None
        child = np.where(valid, child, np.inf)
        # first minimum in (feature, position) order
        f_pos, k = divmod(int(np.argmin(child.T)), child.shape[0])
        lo, hi = xs[k, f_pos], xs[k + 1, f_pos]
        thr = (lo + hi) / 2.0
        if thr >= hi:
            thr = lo
        return float(child[k, f_pos]), int(feats[f_pos]), float(thr)

    def add_node(self, idx, depth, key, order) -> int:
        c = self.cols
        a, b = self.w0[idx].sum(), self.w1[idx].sum()
        gain, sf, st = 0.0, -1, 0.0
        if len(idx) >= 2 and a > 0 and b > 0:
            perm = _feature_order(key, self.d)
            found = self.search(idx, perm[:self.mf])
            if found is None and self.mf < self.d:
                found = self.search(idx, perm[self.mf:])
            if found is not None:
                child, sf, st = found
                gain = float(_impurity(a, b, self.criterion)) - child
        for name, v in (("feature", -1), ("threshold", 0.0), ("left", -1), ("right", -1),
                        ("value", b / (a + b) if a + b > 0 else 0.0), ("depth", depth),
                        ("n", len(idx)), ("gain", gain), ("sf", sf), ("st", st),
                        ("order", order), ("idx", idx)):
            c[name].append(v)
        c.setdefault("key", []).append(key)
        return len(c["value"]) - 1

    def expand(self, node) -> tuple[int, int]:
        c = self.cols
        idx, f, thr = c["idx"][node], c["sf"][node], c["st"][node]
        go_left = self.X[idx, f] <= thr
        c["feature"][node], c["threshold"][node] = f, thr
        kids = []
        for side, part in ((0, idx[go_left]), (1, idx[~go_left])):
            kids.append(self.add_node(part, c["depth"][node] + 1, _child_key(c["key"][node], side),
                                      2 * c["order"][node] + side))
        c["left"][node], c["right"][node] = kids
        return kids[0], kids[1]

    def expandable(self, node, max_depth, mss) -> bool:
        c = self.cols
        return (c["sf"][node] >= 0 and c["n"][node] >= mss
                and (max_depth is None or c["depth"][node] < max_depth))

    def build(self, idx, key, max_depth, mss, max_leaves) -> Tree:
        root = self.add_node(idx, 0, key, 1)
        if max_leaves is None:
            stack = [root]
            while stack:
                node = stack.pop()
                if self.expandable(node, max_depth, mss):
                    stack.extend(self.expand(node))
        else:
            heap, leaves = [], 1

            def push(n):
                if self.expandable(n, max_depth, mss):
                    heapq.heappush(heap, _priority(self.cols, n))

            push(root)
            while heap and leaves < max_leaves:
                *_, node = heapq.heappop(heap)
                for kid in self.expand(node):
                    push(kid)
                leaves += 1
        c = self.cols
        return Tree(np.array(c["feature"], dtype=np.int64), np.array(c["threshold"]),
                    np.array(c["left"], dtype=np.int64), np.array(c["right"], dtype=np.int64),
                    np.array(c["value"]), np.array(c["depth"], dtype=np.int64),
                    np.array(c["n"], dtype=np.int64), np.array(c["gain"]), list(c["order"]),
                    self.d)


def _priority(cols, node):
    return (-cols["gain"][node], cols["depth"][node], cols["order"][node], node)


def _tree_key(seed) -> int:
    if isinstance(seed, np.random.Generator):
        return int(seed.integers(0, 2 ** 63))
    return _mix(int(seed) & _MASK)


def fit_tree(X, y, config: ForestConfig | None = None, seed=None, max_features: int | None = None,
             sample_counts: np.ndarray | None = None) -> Tree:
    """Grow one tree.

    Parameters
    ----------
    X, y : array_like
        Features ``(n, d)`` and binary labels.
    config : ForestConfig
        Only the per-tree fields are used.
    seed : int or numpy Generator, optional
        Determines the tree key behind every node's feature order (default
        ``config.seed``).
    max_features : int, optional
        Features tried per split before falling back to the rest; default all
        (or ``config.max_features`` when set).
    sample_counts : array, optional
        Multiplicity of each row (bootstrap counts); rows with 0 are unused.
    """
    config = config or ForestConfig()
    config.validate()
    X, y = check_data(X, y)
    n, d = X.shape
    key = _tree_key(config.seed if seed is None else seed)
    if max_features is None:
        max_features = config.max_features or d
    counts = np.ones(n) if sample_counts is None else np.asarray(sample_counts, dtype=np.float64)
    cw = class_weights(y, config.class_weight)
    w = counts * cw[y]
    w0 = np.where(y == 0, w, 0.0)
    w1 = np.where(y == 1, w, 0.0)
    idx = np.flatnonzero(counts > 0)
    builder = _Builder(X, w0, w1, config.criterion, max_features)
    return builder.build(idx, key, config.max_depth, config.min_samples_split, config.max_leaf_nodes)


def decision_paths(tree: Tree, X) -> np.ndarray:
    """Node ids visited by each row, root first; padded by repeating the final leaf."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != tree.n_features:
        raise InconsistentDims(f"tree expects {tree.n_features} features, got {X.shape[1]}")
    node = np.zeros(len(X), dtype=np.int64)
    rows = np.arange(len(X))
    path = [node.copy()]
    while True:
        internal = tree.left[node] >= 0
        if not internal.any():
            break
        r, nd = rows[internal], node[internal]
        go_left = X[r, tree.feature[nd]] <= tree.threshold[nd]
        node = node.copy()
        node[r] = np.where(go_left, tree.left[nd], tree.right[nd])
        path.append(node)
    return np.stack(path, axis=1)


def tree_proba(tree: Tree, X) -> np.ndarray:
    """P(class 1) for every row of ``X``."""
    return tree.value[decision_paths(tree, X)[:, -1]]


def predict_tree(tree: Tree, x):
    """Class (1 when P(class 1) > 0.5) and probability; scalars for a single row."""
    single = np.asarray(x).ndim == 1
    p = tree_proba(tree, x)
    cls = (p > 0.5).astype(np.int64)
    if single:
        return int(cls[0]), float(p[0])
    return cls, p


# -- deriving limited trees from a full one ----------------------------------

def _expandable_mask(tree: Tree, max_depth, mss) -> np.ndarray:
    ok = (tree.left >= 0) & (tree.n_samples >= mss)
    if max_depth is not None:
        ok &= tree.node_depth < max_depth
    return ok


def expansion_ranks(tree: Tree, max_depth, mss, limit: int) -> np.ndarray:
    """Best-first expansion order of ``tree``'s internal nodes under the limits.

    ``tree`` must be fully grown (no limits). Entry ``k`` is the step at which
    node ``k`` is expanded, or a large sentinel if it is never expanded within
    ``limit`` steps.
    """
    ok = _expandable_mask(tree, max_depth, mss)
    rank = np.full(tree.n_nodes, np.iinfo(np.int64).max, dtype=np.int64)
    cols = {"gain": tree.gain, "depth": tree.node_depth, "order": tree.order}
    heap = [_priority(cols, 0)] if ok[0] else []
    step = 0
    while heap and step < limit:
        *_, node = heapq.heappop(heap)
        rank[node] = step
        step += 1
        for kid in (tree.left[node], tree.right[node]):
            if ok[kid]:
                heapq.heappush(heap, _priority(cols, kid))
    return rank


def limited_leaves(tree: Tree, paths: np.ndarray, max_depth=None, mss: int = 2,
                   max_leaf_nodes=None, ranks: np.ndarray | None = None) -> np.ndarray:
    """Leaf reached by each path in the pruning of a full ``tree`` under the limits.

    Equals the leaf :func:`fit_tree` would reach with the same key and limits.
    """
    if max_leaf_nodes is None:
        stop = ~_expandable_mask(tree, max_depth, mss)[paths]
    else:
        if ranks is None:
            ranks = expansion_ranks(tree, max_depth, mss, max_leaf_nodes - 1)
        stop = ranks[paths] >= max_leaf_nodes - 1
    first = np.argmax(stop, axis=1)
    return paths[np.arange(len(paths)), first]
