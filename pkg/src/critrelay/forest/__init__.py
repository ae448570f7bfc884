"""From-scratch random forest with class weighting, metrics and grid search."""
from .ensemble import (ModelFileError, RandomForestModel, SchemaError, fit_forest, load_model,
                       predict, save_model)
from .metrics import Metrics, evaluate
from .search import (CVResult, GridError, GridSpec, LogEntry, SearchError, cross_validate,
                     grid_search_two_stage, kfold_split, load_grid, load_grid_file)
from .tree import DecisionTree, Hyperparams, best_split, grow_tree, weighted_gini

__all__ = [
    "CVResult", "DecisionTree", "GridError", "GridSpec", "Hyperparams", "LogEntry", "Metrics",
    "ModelFileError", "RandomForestModel", "SchemaError", "SearchError", "best_split",
    "cross_validate", "evaluate", "fit_forest", "grid_search_two_stage", "grow_tree",
    "kfold_split", "load_grid", "load_grid_file", "load_model", "predict", "save_model",
    "weighted_gini",
]
