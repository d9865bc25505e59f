"""Cluster-based multi-threshold feedback for multi-user MIMO broadcast channels."""

from .config import ConfigError, ExperimentConfig
from .fading import (RankDeficientChannel, SystemConfig, lambda_from_config,
                     sample_snr_batch, zf_snr)
from .order_stats import (MaxOfExponentials, expected_max_log_rate, max_cdf, max_pdf,
                          most_probable_rank, rank_distribution, rank_probability)
from .quantization import (FeedbackBudget, allocate_bits, equiprobable_levels,
                           expected_feedback_load)
from .schemes import (ClusterFeedback, ConventionalFeedback, FullCSI,
                      SingleThresholdFeedback, default_schemes)
from .simulation import run_drop, simulate, simulate_many, sweep_users
from .thresholds import (ClusterPlan, compute_thresholds, homogeneous_thresholds,
                         min_clusters, partition_users, rate_loss_bound, type1_thresholds,
                         type2_thresholds)

__version__ = "0.1.0"

__all__ = [
    "ClusterFeedback", "ClusterPlan", "ConfigError", "ConventionalFeedback",
    "ExperimentConfig", "FeedbackBudget", "FullCSI", "MaxOfExponentials",
    "RankDeficientChannel", "SingleThresholdFeedback", "SystemConfig", "allocate_bits",
    "compute_thresholds", "default_schemes", "equiprobable_levels", "expected_feedback_load",
    "expected_max_log_rate", "homogeneous_thresholds", "lambda_from_config", "max_cdf",
    "max_pdf", "min_clusters", "most_probable_rank", "partition_users", "rank_distribution",
    "rank_probability", "rate_loss_bound", "run_drop", "sample_snr_batch", "simulate",
    "simulate_many", "sweep_users", "type1_thresholds", "type2_thresholds", "zf_snr",
]
