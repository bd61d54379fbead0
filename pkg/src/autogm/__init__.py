"""UnifiedGM message-passing models and budget-aware AutoGM search."""
__version__ = "0.1.0"

from .engine import AggregationStrategy, ParamSet, forward, preset, propagate  # noqa: E402
from .graph import Dataset, DatasetError, SparseGraph, generate_sbm, load_dataset, write_dataset  # noqa: E402
from .objective import BudgetConstraint, evaluate_objective  # noqa: E402
from .search import (SearchTrace, autogm_search, evaluate_preset, parameter_sweep,  # noqa: E402
                     random_search)
from .trainer import TrainConfig, evaluate, train  # noqa: E402
from .estimators import AutoGMSearch, UnifiedGMClassifier  # noqa: E402

__all__ = ["AggregationStrategy", "ParamSet", "forward", "propagate", "preset", "Dataset",
           "DatasetError", "SparseGraph", "generate_sbm", "load_dataset", "write_dataset",
           "BudgetConstraint", "evaluate_objective", "SearchTrace", "autogm_search",
           "random_search", "evaluate_preset", "parameter_sweep", "TrainConfig", "train",
           "evaluate", "AutoGMSearch", "UnifiedGMClassifier"]
