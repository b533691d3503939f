"""Property-graph embedding toolkit.

Pipeline: cluster nodes by properties, sample fixed-size two-hop
neighborhoods with cluster-conditioned biases, aggregate sampled
property vectors through trained weight matrices, then evaluate the
embeddings on node classification (F1) or link prediction (MRR).
"""

from .analysis import (SimilarityModel, StrategyMatrix, bias_sweep,
                       expected_step_similarity, fit_bias_to_target,
                       l1_strategy_distance, similarity, strategy_biased,
                       strategy_unbiased, within_cluster_gap)
from .clustering import (ClusterAssignment, EdgeClusterAssignment, choose_k,
                         cluster_edges, cluster_nodes, dbscan, kmeans)
from .encoder import (EncoderParams, encode_edge_aware, encode_plain,
                      init_params, load_params, save_params)
from .errors import ConfigError, DataError, NumericError
from .evaluation import Metrics, f1_scores, mrr, rank_link_queries
from .graph import NodeSplit, PropertyGraph, load_graph, neighbors, split_nodes
from .pipeline import RunConfig, parse_config_file, run_pipeline
from .sampler import (BiasConfig, SampledGraph, assign_biases,
                      normalize_biases, sample_neighborhood)
from .synthetic import SyntheticSpec, generate_synthetic
from .trainer import (AdamState, TrainConfig, adam_step, bce_loss, link_loss,
                      train)

__version__ = "0.1.0"
