"""K-agnostic community detection with a pretrained pair classifier.

The pipeline: extract sparse modularity features, encode them with a
small GNN, classify sampled node pairs as same-community or not, read
communities off the connected components of the positively classified
pairs, then refine with label propagation or weighted Louvain.
"""

from .graph import (Graph, Partition, SuperGraph, coarsen, connected_components,
                    lift, load_edge_list, modularity, read_partition,
                    reduced_modularity_features, write_partition)
from .model import (ModelConfig, ModelParams, ProjectionSpec, encode,
                    extract_features, load_model, pair_score, pair_score_naive,
                    save_model, score_batch, score_dense)
from .train import (TrainConfig, build_ground_truth, gradients, loss_bce,
                       loss_mod, loss_total, pretrain)
from .inference import (PhaseTimings, RefinerChoice, end_to_end, infer_partition,
                     lpa, louvain, refine, sample_pairs)
from .synthgen import GenConfig, GenParams, generate_dcsbm, sample_params
from .bench import pairwise_agreement, run_benchmark

__version__ = "0.1.0"

__all__ = [
    "Graph", "Partition", "SuperGraph", "coarsen", "connected_components",
    "lift", "load_edge_list", "modularity", "read_partition",
    "reduced_modularity_features", "write_partition",
    "ModelConfig", "ModelParams", "ProjectionSpec", "encode",
    "extract_features", "load_model", "pair_score", "pair_score_naive",
    "save_model", "score_batch", "score_dense",
    "TrainConfig", "build_ground_truth", "gradients", "loss_bce", "loss_mod",
    "loss_total", "pretrain",
    "PhaseTimings", "RefinerChoice", "end_to_end", "infer_partition", "lpa",
    "louvain", "refine", "sample_pairs",
    "GenConfig", "GenParams", "generate_dcsbm", "sample_params",
    "pairwise_agreement", "run_benchmark",
]
