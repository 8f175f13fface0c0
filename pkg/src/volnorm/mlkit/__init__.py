"""Trees, forests, cross-validation, metrics and the statistics used to compare models."""
from .anova import AnovaRow, AnovaTable, anova_two_way
from .forest import Forest, fit_forest, load_forest, predict, predict_proba, save_forest
from .impact import Impact, PrevalenceCheck, impact_extrapolation, implied_prevalences
from .metrics import METRIC_NAMES, Confusion, auroc, binary_metrics, confusion
from .stats import betainc, f_cdf, f_ppf, f_sf, t_cdf, t_two_sided_p
from .tree import ForestConfig, Tree, fit_tree, predict_tree, tree_proba
from .validation import (TABLE1_GRID, EvalReport, GridRow, expand_grid, fold_sizes,
                         format_grid_table, grid_search, kfold_cv, kfold_indices)

__all__ = [
    "AnovaRow", "AnovaTable", "anova_two_way",
    "Forest", "fit_forest", "load_forest", "predict", "predict_proba", "save_forest",
    "Impact", "PrevalenceCheck", "impact_extrapolation", "implied_prevalences",
    "METRIC_NAMES", "Confusion", "auroc", "binary_metrics", "confusion",
    "betainc", "f_cdf", "f_ppf", "f_sf", "t_cdf", "t_two_sided_p",
    "ForestConfig", "Tree", "fit_tree", "predict_tree", "tree_proba",
    "TABLE1_GRID", "EvalReport", "GridRow", "expand_grid", "fold_sizes", "format_grid_table",
    "grid_search", "kfold_cv", "kfold_indices",
]
