"""Seeded grid search, model selection, final evaluation and exports."""

from .config import HarnessConfig, load_config
from .evaluate import evaluate_matrix, final_eval, predict_tile, train_model
from .exports import export_boxplot_data, export_prediction_raster
from .grid import (
    DEFAULT_GRIDS,
    ExperimentResult,
    SelectionRule,
    cell_key,
    expand_cells,
    leaf_choices,
    load_results,
    run_grid_search,
    select_best,
)

__all__ = [
    "HarnessConfig",
    "load_config",
    "run_grid_search",
    "load_results",
    "select_best",
    "expand_cells",
    "cell_key",
    "leaf_choices",
    "SelectionRule",
    "ExperimentResult",
    "DEFAULT_GRIDS",
    "train_model",
    "evaluate_matrix",
    "predict_tile",
    "final_eval",
    "export_prediction_raster",
    "export_boxplot_data",
]
