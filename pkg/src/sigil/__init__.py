"""Similarity-guided contrastive clustering for multi-view graph anomaly
detection: hierarchical pooling autoencoder, contrastive regularization,
anomaly scoring, injection benchmarks, and analytical diagnostics."""

from .graphs import AnomalyLabels, MultiViewGraph, View, load_bundle, load_graph, synthesize_views
from .injection import InjectionPlan, apply_plan, inject_attribute, inject_structural
from .losses import (
    LossConfig,
    SimilarityMap,
    align_uniform_decomposition,
    build_similarity_map,
    clustering_contrastive_loss,
    reconstruction_loss,
    similarity_guided_loss,
    total_objective,
)
from .metrics import MetricReport, auc, recall_at_k
from .model import ModelSpec, SigilModel, decode, encode, gcn_forward
from .scoring import ScoreReport, combine_scores, mahalanobis_scores, reconstruction_scores, score_graph
from .synth import SyntheticSpec, generate_synthetic
from .training import TrainConfig, TrainLog, initialize, train

__version__ = "0.1.0"
