"""duoreid: dual-model cross-modality retrieval on unlabeled feature sets.

Two independently seeded models each cluster both modalities, keep per-cluster
memory banks, and train on the peer's labels translated through explicit
cluster matchings, with per-sample robust loss exponents fitted from a
two-component mixture over diagnostic losses.
"""

from .clustering import (NOISE, ClusterAssignment, DbscanConfig,
                         cluster_centers, cosine_distances, dbscan,
                         l2_normalize)
from .data import (MODALITIES, Dataset, Sample, SynthSpec, generate_synthetic,
                   load_dataset, modality_offset, save_dataset)
from .encoders import (EncoderParams, ModalityEncoder, encoder_forward,
                       forward_with_cache, init_encoder, sgd_step)
from .evaluation import (Ranking, build_rankings, cmc, dataset_features,
                         evaluate_retrieval, joint_feature, map_score, minp)
from .harness import (ExperimentPlan, export_loss_distributions,
                      export_mismatch_rates, majority_identities,
                      matching_mismatch, mismatch_series, run_ablation_suite,
                      run_gamma_sweep, separation_auc,
                      standard_benchmark_config, standard_benchmark_spec,
                      trend_slope)
from .losses import (ce_loss, clamp_count, diagnostic_loss, loss_gradient,
                     LossReport, per_sample_loss, ra_term, ra_term_derivative,
                     reset_clamp_count, term_logit_gradient, total_loss)
from .matching import (Matching, assignment_cost, cost_matrix,
                       linear_assignment, match_clusters, relabel)
from .memory import (MemoryBank, class_probabilities, class_probability_matrix,
                     init_memory, refresh_memory, renormalized, softmax,
                     update_memory)
from .reliability import (DegenerateLossesError, GmmParams, RalConfig,
                          clean_posterior, fit_gmm_2, gamma_from_posterior,
                          gammas_from_losses)
from .training import (ModelState, PseudoLabelSet, RunLog, TrainConfig,
                       load_checkpoint, lr_at_epoch, make_flip_sets,
                       save_checkpoint, train, train_epoch, warm_up)

__version__ = "0.1.0"

__all__ = [
    "NOISE", "ClusterAssignment", "DbscanConfig", "cluster_centers",
    "cosine_distances", "dbscan", "l2_normalize",
    "MODALITIES", "Dataset", "Sample", "SynthSpec", "generate_synthetic",
    "load_dataset", "modality_offset", "save_dataset",
    "EncoderParams", "ModalityEncoder", "encoder_forward",
    "forward_with_cache", "init_encoder", "sgd_step",
    "Ranking", "build_rankings", "cmc", "dataset_features",
    "evaluate_retrieval", "joint_feature", "map_score", "minp",
    "ExperimentPlan", "export_loss_distributions", "export_mismatch_rates",
    "majority_identities", "matching_mismatch", "mismatch_series",
    "run_ablation_suite", "run_gamma_sweep", "separation_auc",
    "standard_benchmark_config", "standard_benchmark_spec", "trend_slope",
    "ce_loss", "clamp_count", "diagnostic_loss", "loss_gradient", "LossReport",
    "per_sample_loss", "ra_term", "ra_term_derivative", "reset_clamp_count",
    "term_logit_gradient", "total_loss",
    "Matching", "assignment_cost", "cost_matrix", "linear_assignment",
    "match_clusters", "relabel",
    "MemoryBank", "class_probabilities", "class_probability_matrix",
    "init_memory", "refresh_memory", "renormalized", "softmax",
    "update_memory",
    "DegenerateLossesError", "GmmParams", "RalConfig", "clean_posterior",
    "fit_gmm_2", "gamma_from_posterior", "gammas_from_losses",
    "ModelState", "PseudoLabelSet", "RunLog", "TrainConfig",
    "load_checkpoint", "lr_at_epoch", "make_flip_sets", "save_checkpoint",
    "train", "train_epoch", "warm_up",
    "__version__",
]
