"""Local and regional counterfactual rules estimated from random forests."""
from ._engine import EmptySupportError
from .data_model import (Dataset, FeatureSpec, Hyperrectangle, IngestionError, TargetSet, load_csv,
                         load_dataset, minmax_normalize, split)
from .divergent import (EXHAUSTIVE, PATH_SAMPLED, DivergentExplanation, SearchResult, candidate_features,
                        minimal_divergent, minimal_divergent_rule)
from .evaluation import MetricReport, accuracy, cost, plausibility, run_local, sparsity, stability, summarize
from .forest import Forest, build_tree, deserialize, forest_from_trees, serialize, train
from .pipeline import Setup, prepare
from .projected import cdp, projected_cells, projected_weights, sdp
from .recourse import (AnnealingConfig, IsolationForest, Recourse, fit_isolation_forest, l1_project,
                       sample_recourse)
from .regional import Condition, cdp_rule, crp_local, crp_rule, regional_weights
from .rules import (CounterfactualRule, build_local_rule, build_regional_rule, explain_local,
                    explain_regional, merge_rectangles)

__version__ = "0.1.0"
