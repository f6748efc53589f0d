"""Document-level early exit for additive regression-tree ranking ensembles."""
from .data import Dataset, Document, ParseError, QueryGroup, dataset_stats, load_dataset, parse_letor_line
from .ensemble import Ensemble, SchemaError, Tree, eval_tree, load_native, parse_lightgbm_text, save_native, score_full
from .gbdt import Forest, TrainParams, feature_importance, logistic_grad_hess, predict_proba, train_forest
from .metrics import cut_statistics, ndcg_at_k, precision_recall, speedup
from .scorer import ScoringState, TraversalCost, backend_equivalence, resume_scoring, score_prefix
from .strategies import (
    Ept,
    Ert,
    ExitDecision,
    Full,
    Ideal,
    Lear,
    apply_ept,
    apply_ert,
    apply_lear,
    assemble_ranking,
    ideal_cut,
    run_pipeline,
)

__version__ = "0.1.0"
