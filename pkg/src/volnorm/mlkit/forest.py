"""Random forests of CART trees with per-tree deterministic seeding.

Tree ``t`` of a forest seeded with ``s`` draws its bootstrap sample and all
of its split feature subsets from ``default_rng([s, t])``. Trees therefore
do not depend on each other, on fitting order, or on how many trees the
forest has: a 50-tree forest is exactly the first 50 trees of a 300-tree
forest with the same settings.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass

import numpy as np

from .tree import ForestConfig, Tree, check_data, fit_tree, tree_proba

__all__ = ["Forest", "tree_rng", "features_per_split", "fit_forest_tree", "fit_forest",
           "predict_proba", "predict", "save_forest", "load_forest"]


@dataclass
class Forest:
    config: ForestConfig
    trees: list[Tree]
    feature_names: tuple[str, ...] | None = None

    @property
    def n_features(self) -> int:
        return self.trees[0].n_features


def tree_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(index)])


def features_per_split(d: int) -> int:
    return max(1, math.isqrt(d))


def fit_forest_tree(X, y, config: ForestConfig, index: int) -> Tree:
    """Tree ``index`` of the forest described by ``config`` (inputs already checked)."""
    n, d = X.shape
    rng = tree_rng(config.seed, index)
    counts = np.bincount(rng.integers(0, n, n), minlength=n) if config.bootstrap else None
    mf = config.max_features or features_per_split(d)
    return fit_tree(X, y, config, seed=rng, max_features=mf, sample_counts=counts)


def fit_forest(X, y, config: ForestConfig | None = None) -> Forest:
    config = config or ForestConfig()
    config.validate()
    X, y = check_data(X, y)
    trees = [fit_forest_tree(X, y, config, t) for t in range(config.n_estimators)]
    return Forest(config, trees)


def predict_proba(forest: Forest, X) -> np.ndarray:
    """Mean of the trees' P(class 1)."""
    X = np.asarray(X, dtype=np.float64)
    total = np.zeros(len(X) if X.ndim == 2 else 1)
    for tree in forest.trees:
        total += tree_proba(tree, X)
    return total / len(forest.trees)


def predict(forest: Forest, X) -> np.ndarray:
    return (predict_proba(forest, X) > 0.5).astype(np.int64)


def save_forest(forest: Forest, path) -> None:
    """JSON with the config and every tree's node arrays (floats round-trip exactly)."""
    doc = {"config": asdict(forest.config), "trees": [t.to_dict() for t in forest.trees],
           "feature_names": list(forest.feature_names) if forest.feature_names else None}
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
    os.replace(tmp, path)


def load_forest(path) -> Forest:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    names = doc.get("feature_names")
    return Forest(ForestConfig(**doc["config"]), [Tree.from_dict(t) for t in doc["trees"]],
                  tuple(names) if names else None)
