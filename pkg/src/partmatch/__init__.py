"""Parallel entity matching with size-based and blocking-based partitioning."""

from .dataservice import DataStore, Schema
from .errors import (
    ConfigurationError,
    IntegrityError,
    LoadError,
    PartialResultsError,
    PartitionNotFound,
    SelfPairError,
)
from .metrics import RunMetrics
from .model import (
    ComputingEnvironment,
    Correspondence,
    Entity,
    MatchResult,
    MatchTask,
    Partition,
    PartitionKind,
    canonical_pair,
    merge_results,
)
from .partitioning import (
    MISC,
    Block,
    PartitionPlan,
    SizingInput,
    block_by_key,
    blocking_partition,
    generate_blocking_tasks,
    generate_two_source_tasks,
    max_partition_size,
    size_based_partition,
    tune_partitions,
)
from .similarity import (
    SimilarityMeasure,
    apply_measure,
    cosine_token_sim,
    edit_distance_sim,
    jaccard_token_sim,
    trigram_sim,
)
from .strategies import (
    MatchStrategy,
    evaluate_pair,
    evaluate_partition_pair,
    logistic_regression_strategy,
    prune_bound,
    weighted_average_strategy,
)

__version__ = "0.1.0"

__all__ = [
    "Block",
    "ComputingEnvironment",
    "ConfigurationError",
    "Correspondence",
    "DataStore",
    "Entity",
    "IntegrityError",
    "LoadError",
    "MISC",
    "MatchResult",
    "MatchStrategy",
    "MatchTask",
    "PartialResultsError",
    "Partition",
    "PartitionKind",
    "PartitionNotFound",
    "PartitionPlan",
    "RunMetrics",
    "Schema",
    "SelfPairError",
    "SimilarityMeasure",
    "SizingInput",
    "apply_measure",
    "block_by_key",
    "blocking_partition",
    "canonical_pair",
    "cosine_token_sim",
    "edit_distance_sim",
    "evaluate_pair",
    "evaluate_partition_pair",
    "generate_blocking_tasks",
    "generate_two_source_tasks",
    "jaccard_token_sim",
    "logistic_regression_strategy",
    "max_partition_size",
    "merge_results",
    "prune_bound",
    "size_based_partition",
    "trigram_sim",
    "tune_partitions",
    "weighted_average_strategy",
]
