"""k-fold cross-validation, evaluation reports and forest grid search."""
from __future__ import annotations

import itertools
import math
import os
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from ..errors import EmptyGrid, InvalidConfig, KTooLarge, OneClassOnly
from .forest import fit_forest, fit_forest_tree, predict_proba
from .metrics import METRIC_NAMES, Confusion, auroc, binary_metrics, confusion
from .tree import ForestConfig, check_data, decision_paths, expansion_ranks, limited_leaves

__all__ = [
    "TABLE1_GRID",
    "fold_sizes",
    "kfold_indices",
    "FoldResult",
    "EvalReport",
    "evaluate_fold",
    "kfold_cv",
    "expand_grid",
    "GridRow",
    "grid_search",
    "format_grid_table",
]

# the random-forest tuning grid (4,320 points)
TABLE1_GRID: dict[str, list] = {
    "n_estimators": [50, 150, 200, 250, 300],
    "criterion": ["gini", "entropy"],
    "max_depth": [10, 15, 20, 25, 30, 35, 40, 45, 50],
    "max_leaf_nodes": [5, 10, 15, 20, 30, None],
    "class_weight": ["balanced", None],
    "min_samples_split": [2, 4, 6, 8],
}


def fold_sizes(n: int, k: int) -> list[int]:
    """Near-equal sizes; the first ``n % k`` folds get one extra sample."""
    if k < 2:
        raise InvalidConfig("k must be >= 2")
    if k > n:
        raise KTooLarge(f"k={k} exceeds {n} samples")
    base, extra = divmod(n, k)
    return [base + (1 if i < extra else 0) for i in range(k)]


def kfold_indices(n: int, k: int = 5, seed: int = 0) -> list[np.ndarray]:
    """Test-index arrays of a seeded shuffled partition of ``range(n)``."""
    sizes = fold_sizes(n, k)
    perm = np.random.default_rng(seed).permutation(n)
    bounds = np.cumsum([0] + sizes)
    return [np.sort(perm[a:b]) for a, b in zip(bounds[:-1], bounds[1:])]


def _train_idx(n, test):
    keep = np.ones(n, dtype=bool)
    keep[test] = False
    return np.flatnonzero(keep)


@dataclass(frozen=True)
class FoldResult:
    confusion: Confusion
    metrics: dict[str, float]


def evaluate_fold(proba: np.ndarray, y_test: np.ndarray) -> FoldResult:
    pred = (proba > 0.5).astype(np.int64)
    c = confusion(y_test, pred)
    m = binary_metrics(c)
    try:
        m["AUROC"] = auroc(proba, y_test)
    except OneClassOnly:
        m["AUROC"] = math.nan
    return FoldResult(c, m)


def _mean_defined(values) -> float:
    vals = [v for v in values if not math.isnan(v)]
    return sum(vals) / len(vals) if vals else math.nan


@dataclass
class EvalReport:
    """Per-fold confusion counts and metrics, plus means over defined folds."""

    model: str
    folds: list[FoldResult] = field(default_factory=list)

    def mean(self, metric: str) -> float:
        return _mean_defined([f.metrics[metric] for f in self.folds])

    @property
    def means(self) -> dict[str, float]:
        return {m: self.mean(m) for m in METRIC_NAMES}

    def matrix(self) -> np.ndarray:
        """``(metrics, folds)`` array of per-fold values."""
        return np.array([[f.metrics[m] for f in self.folds] for m in METRIC_NAMES])

    HEADER = ("model", "fold", "TP", "FP", "FN", "TN") + METRIC_NAMES

    def rows(self) -> list[str]:
        out = []
        for i, f in enumerate(self.folds, 1):
            c = f.confusion
            vals = [_fmt(f.metrics[m]) for m in METRIC_NAMES]
            out.append("\t".join([self.model, str(i), str(c.tp), str(c.fp), str(c.fn), str(c.tn)] + vals))
        means = [_fmt(self.mean(m)) for m in METRIC_NAMES]
        out.append("\t".join([self.model, "mean", "", "", "", ""] + means))
        return out

    def to_text(self) -> str:
        return "\n".join(["\t".join(self.HEADER)] + self.rows()) + "\n"

    @classmethod
    def from_text(cls, text: str) -> list["EvalReport"]:
        """Parse one or more reports (a file may hold several models)."""
        reports: dict[str, EvalReport] = {}
        for line in text.splitlines()[1:]:
            if not line.strip():
                continue
            parts = line.split("\t")
            model, fold = parts[0], parts[1]
            rep = reports.setdefault(model, cls(model))
            if fold == "mean":
                continue
            c = Confusion(*(int(v) for v in parts[2:6]))
            m = {name: _parse(v) for name, v in zip(METRIC_NAMES, parts[6:])}
            rep.folds.append(FoldResult(c, m))
        return list(reports.values())

    def save(self, path) -> None:
        tmp = f"{path}.tmp{os.getpid()}"
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(self.to_text())
        os.replace(tmp, path)


def _fmt(v: float) -> str:
    return "NA" if math.isnan(v) else repr(float(v))


def _parse(v: str) -> float:
    return math.nan if v == "NA" else float(v)


def kfold_cv(X, y, config: ForestConfig | None = None, k: int = 5, seed: int = 0,
             model: str = "forest") -> EvalReport:
    """Fit a forest on each training split and score the held-out fold."""
    config = config or ForestConfig()
    X, y = check_data(X, y)
    report = EvalReport(model)
    for test in kfold_indices(len(y), k, seed):
        train = _train_idx(len(y), test)
        forest = fit_forest(X[train], y[train], config)
        report.folds.append(evaluate_fold(predict_proba(forest, X[test]), y[test]))
    return report


# -- grid search -------------------------------------------------------------

def expand_grid(grid: Mapping[str, Sequence], base: ForestConfig | None = None) -> list[ForestConfig]:
    """Cartesian product in key order (last key varies fastest)."""
    base = base or ForestConfig()
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise EmptyGrid("grid has no points")
    keys = list(grid)
    unknown = set(keys) - set(ForestConfig.__dataclass_fields__)
    if unknown:
        raise InvalidConfig(f"unknown grid parameters: {sorted(unknown)}")
    configs = [replace(base, **dict(zip(keys, combo))) for combo in itertools.product(*grid.values())]
    for c in configs:
        c.validate()
    return configs


@dataclass(frozen=True)
class GridRow:
    config: ForestConfig
    accuracy: float


def _accuracy(proba, y_test) -> float:
    return evaluate_fold(proba, y_test).metrics["Accuracy"]


def _cached_fold_probas(X, y, configs, folds):
    """Per (config, fold) test probabilities, sharing trees between configs.

    For each fold and each combination of the settings that shape node
    statistics (criterion, class weight, bootstrap, seed) only the largest
    forest is grown, and without limits. Smaller forests are prefixes of it,
    and trees with depth, split-size or leaf limits are prunings of its full
    trees, so every other grid point is read off those trees.
    """
    n = len(y)
    groups: dict[ForestConfig, list[int]] = {}
    for i, c in enumerate(configs):
        key = replace(c, n_estimators=1, max_depth=None, min_samples_split=2, max_leaf_nodes=None)
        groups.setdefault(key, []).append(i)
    probas: dict[tuple[int, int], np.ndarray] = {}
    for f, test in enumerate(folds):
        train = _train_idx(n, test)
        Xtr, ytr, Xte = X[train], y[train], X[test]
        for key, members in groups.items():
            n_max = max(configs[i].n_estimators for i in members)
            variants = sorted({(configs[i].max_depth, configs[i].min_samples_split,
                                configs[i].max_leaf_nodes) for i in members}, key=str)
            budget: dict[tuple, int] = {}
            for md, mss, mln in variants:
                if mln is not None:
                    budget[(md, mss)] = max(budget.get((md, mss), 0), mln - 1)
            per_tree = {v: np.empty((n_max, len(test))) for v in variants}
            cfg = replace(key, n_estimators=n_max)
            for t in range(n_max):
                tree = fit_forest_tree(Xtr, ytr, cfg, t)
                paths = decision_paths(tree, Xte)
                ranks = {dm: expansion_ranks(tree, dm[0], dm[1], lim) for dm, lim in budget.items()}
                for v in variants:
                    md, mss, mln = v
                    leaves = limited_leaves(tree, paths, md, mss, mln,
                                            ranks.get((md, mss)) if mln is not None else None)
                    per_tree[v][t] = tree.value[leaves]
            cums = {v: np.cumsum(a, axis=0) for v, a in per_tree.items()}
            for i in members:
                c = configs[i]
                v = (c.max_depth, c.min_samples_split, c.max_leaf_nodes)
                probas[(i, f)] = cums[v][c.n_estimators - 1] / c.n_estimators
    return probas


def grid_search(X, y, grid: Mapping[str, Sequence], k: int = 5, seed: int = 0,
                base: ForestConfig | None = None, strategy: str = "cached"):
    """Score every grid point by mean k-fold CV accuracy.

    Returns ``(best_config, table)`` where ``table`` lists a :class:`GridRow`
    per grid point in grid order and ties go to the earliest point.
    ``strategy="naive"`` refits every forest from scratch; ``"cached"``
    shares trees between points and gives identical numbers.
    """
    X, y = check_data(X, y)
    configs = expand_grid(grid, base)
    folds = kfold_indices(len(y), k, seed)
    if strategy == "naive":
        table = [GridRow(c, kfold_cv(X, y, c, k, seed).mean("Accuracy")) for c in configs]
    elif strategy == "cached":
        probas = _cached_fold_probas(X, y, configs, folds)
        table = []
        for i, c in enumerate(configs):
            accs = [_accuracy(probas[(i, f)], y[test]) for f, test in enumerate(folds)]
            table.append(GridRow(c, _mean_defined(accs)))
    else:
        raise InvalidConfig(f"unknown strategy {strategy!r}")
    best = max(range(len(table)), key=lambda i: (table[i].accuracy, -i))
    return table[best].config, table


def format_grid_table(table: Sequence[GridRow]) -> str:
    cols = ("n_estimators", "criterion", "max_depth", "max_leaf_nodes", "class_weight",
            "min_samples_split", "cv_accuracy")
    lines = ["\t".join(cols)]
    for row in table:
        c = row.config
        lines.append("\t".join(str(v) for v in (c.n_estimators, c.criterion, c.max_depth,
                                                 c.max_leaf_nodes, c.class_weight,
                                                 c.min_samples_split)) + f"\t{row.accuracy!r}")
    return "\n".join(lines) + "\n"
