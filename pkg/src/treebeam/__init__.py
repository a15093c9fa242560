"""Tree-structured retrieval models with beam search.

Builds b-ary label trees over large target sets, trains per-node linear
scorers under several regimes (hierarchical conditional, direct with sampled
negatives, and beam-search-aware training with estimated-optimal node labels),
retrieves targets by level-wise beam search, and measures retrieval quality
exactly on synthetic data where the generating distribution is known.
"""

from .beam import Beam, beam_search, beam_search_table, expand, retrieve_topm, select_topk
from .errors import ConfigError, DataError, TrainingDiverged
from .metrics import (
    MetricsReport,
    RegretReport,
    estimated_regret,
    evaluate_metrics,
    f_measure_at_m,
    level_distribution,
    precision_at_m,
    recall_at_m,
    regret_p_at_m,
)
from .pseudo import NodeLabelAssignment, estimate_z_hat, ground_truth_z, optimal_z_star
from .scorer import (
    LinearScorerParams,
    ProbabilityModel,
    init_params,
    load_checkpoint,
    node_prob_direct,
    node_prob_hierarchical,
    node_relevance_prob,
    save_checkpoint,
    score,
)
from .synth import Instance, SyntheticSpec, eta_of, gen_synthetic, load_dataset, save_dataset
from .toy import (
    ToyConfig,
    fit_direst,
    fit_hierest,
    fit_optest,
    gen_toy,
    run_toy_experiment,
    run_toy_grid,
    sample_toy_dataset,
)
from .train import AdamState, TrainConfig, TrainingLog, adam_step, bce_grad, bce_loss, train
from .tree import Tree, build_random_tree, build_tree, tree_from_json

__all__ = [name for name in dir() if not name.startswith("_")]
