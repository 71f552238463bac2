"""Training losses: reconstruction, similarity-guided contrastive
regularization, the clustering-contrastive ablation variant, and the
align/uniform diagnostic decomposition.

All loss functions are pure in their inputs and reentrant; the tensor
arguments may live on a tape (gradients flow) or be plain constants.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .autodiff import Tensor

__all__ = [
    "SimilarityMap",
    "LossConfig",
    "SingleClusterError",
    "reconstruction_loss",
    "build_similarity_map",
    "build_similarity_map_on_tape",
    "similarity_submatrix",
    "similarity_guided_loss",
    "clustering_contrastive_loss",
    "align_uniform_decomposition",
    "total_objective",
    "hard_clusters",
]

LOSS_VARIANTS = ("similarity_guided", "clustering_l1", "plain_l2", "none")
NORMALIZATIONS = ("symmetric", "row")


class SingleClusterError(ValueError):
    """Clustering-contrastive loss needs at least one negative pair."""


@dataclass(frozen=True)
class SimilarityMap:
    """Normalized mixture of assignment similarity and averaged adjacency.

    ``matrix`` is D^-1/2 K D^-1/2 (symmetric mode) or D^-1 K (row mode)
    for K = alpha * M M^T + (1 - alpha) * mean of the view adjacencies,
    with normalizer D_ii = sum_j K_ij.
    """

    matrix: np.ndarray
    normalizer: np.ndarray
    alpha: float
    normalization: str


@dataclass(frozen=True)
class LossConfig:
    lam: float = 10.0
    alpha: float = 0.9
    tau: float = 1.0
    pair_sample_size: int = 512
    loss_variant: str = "similarity_guided"
    normalization: str = "symmetric"

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must be in [0, 1]")
        if self.pair_sample_size < 2:
            raise ValueError("pair sample size must be at least 2")
        if self.loss_variant not in LOSS_VARIANTS:
            raise ValueError(f"unknown loss variant '{self.loss_variant}'")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"unknown normalization '{self.normalization}'")


def reconstruction_loss(
    originals: list[Tensor | np.ndarray], reconstructions: list[Tensor]
) -> Tensor:
    """Sum over views of the squared L2,1 norm of the residual.

    The L2,1 norm is the sum of row-wise Euclidean norms; it is summed
    first and squared afterwards, so one badly reconstructed (anomalous)
    row inflates the loss without forcing all rows to shrink uniformly.
    """
    if len(originals) != len(reconstructions):
        raise ad.ShapeError("originals and reconstructions disagree on view count")
    total: Tensor | None = None
    for x, xhat in zip(originals, reconstructions):
        x = x if isinstance(x, Tensor) else ad.constant(x)
        norm_sum = ad.sum_all(ad.row_l2_norm(ad.sub(x, xhat)))
        term = ad.elementwise_mul(norm_sum, norm_sum)
        total = term if total is None else ad.add(total, term)
    return total


def _mixture_row_sums(
    membership: np.ndarray, adjacency_mean_rowsum: np.ndarray, alpha: float
) -> np.ndarray:
    # sum_j K_ij = alpha * M_i . colsum(M) + (1 - alpha) * rowsum(mean A)
    col = membership.sum(axis=0)
    return alpha * (membership @ col) + (1.0 - alpha) * adjacency_mean_rowsum


def _adjacency_mean(adjacencies: list) -> np.ndarray:
    dense = [
        np.asarray(a.todense()) if sp.issparse(a) else np.asarray(a)
        for a in adjacencies
    ]
    return sum(dense) / len(dense)


def build_similarity_map(
    membership: np.ndarray,
    adjacencies: list,
    alpha: float,
    normalization: str = "symmetric",
) -> SimilarityMap:
    """Full n x n similarity map from the composed soft assignment.

    Raises if some node ends up with a zero mixture row (possible only
    when alpha is 0 and the node is isolated in every view).
    """
    if normalization not in NORMALIZATIONS:
        raise ValueError(f"unknown normalization '{normalization}'")
    membership = np.asarray(membership, dtype=np.float64)
    mean_adj = _adjacency_mean(adjacencies)
    kernel = alpha * (membership @ membership.T) + (1.0 - alpha) * mean_adj
    normalizer = kernel.sum(axis=1)
    bad = np.flatnonzero(normalizer <= 0)
    if bad.size:
        raise ValueError(
            f"similarity map has a zero row for node {bad[0]}; "
            "the node is isolated and alpha gives it no assignment mass"
        )
    if normalization == "symmetric":
        inv_sqrt = 1.0 / np.sqrt(normalizer)
        matrix = kernel * inv_sqrt[:, None] * inv_sqrt[None, :]
    else:
        matrix = kernel / normalizer[:, None]
    return SimilarityMap(matrix, normalizer, float(alpha), normalization)


def similarity_submatrix(
    membership: np.ndarray,
    adjacencies: list,
    alpha: float,
    normalization: str,
    indices: np.ndarray,
) -> np.ndarray:
    """Principal submatrix of the similarity map without building all of it.

    The normalizer uses exact full row sums, factored through the column
    sums of the membership matrix, so the result matches the submatrix of
    :func:`build_similarity_map` up to summation order.
    """
    membership = np.asarray(membership, dtype=np.float64)
    idx = np.asarray(indices, dtype=np.int64)
    mean_rowsum = sum(
        np.asarray(a.sum(axis=1)).ravel() for a in adjacencies
    ) / len(adjacencies)
    normalizer = _mixture_row_sums(membership, mean_rowsum, alpha)
    bad = np.flatnonzero(normalizer <= 0)
    if bad.size:
        raise ValueError(
            f"similarity map has a zero row for node {bad[0]}; "
            "the node is isolated and alpha gives it no assignment mass"
        )
    sub_m = membership[idx]
    mean_sub = sum(
        np.asarray(a[np.ix_(idx, idx)].todense())
        if sp.issparse(a)
        else np.asarray(a)[np.ix_(idx, idx)]
        for a in adjacencies
    ) / len(adjacencies)
    kernel = alpha * (sub_m @ sub_m.T) + (1.0 - alpha) * mean_sub
    d = normalizer[idx]
    if normalization == "symmetric":
        inv_sqrt = 1.0 / np.sqrt(d)
        return kernel * inv_sqrt[:, None] * inv_sqrt[None, :]
    return kernel / d[:, None]


def build_similarity_map_on_tape(
    membership: Tensor,
    adjacencies: list,
    alpha: float,
    normalization: str = "symmetric",
) -> Tensor:
    """Similarity map as a tape tensor, for the fully differentiable mode."""
    mean_adj = ad.constant(_adjacency_mean(adjacencies))
    kernel = ad.add(
        ad.scalar_mul(ad.matmul(membership, ad.transpose(membership)), alpha),
        ad.scalar_mul(mean_adj, 1.0 - alpha),
    )
    row_sums = ad.sum_rows(kernel)
    if np.any(row_sums.value <= 0):
        bad = int(np.flatnonzero(row_sums.value.ravel() <= 0)[0])
        raise ValueError(f"similarity map has a zero row for node {bad}")
    if normalization == "symmetric":
        inv_sqrt = ad.rsqrt(row_sums)
        return ad.scale_rows(
            ad.scale_cols(kernel, ad.transpose(inv_sqrt)), inv_sqrt
        )
    inv = ad.elementwise_mul(ad.rsqrt(row_sums), ad.rsqrt(row_sums))
    return ad.scale_rows(kernel, inv)


def similarity_guided_loss(
    target: SimilarityMap | np.ndarray | Tensor,
    embeddings: Tensor,
    tau: float,
    pair_sample: np.ndarray | None = None,
) -> Tensor:
    """Squared Frobenius distance between the similarity target and the
    scaled embedding Gram matrix.

    ``embeddings`` rows are expected to be L2-normalized already. With
    ``pair_sample`` the loss is restricted to the sampled principal
    submatrix of both the target and the Gram matrix; sampling all n
    indices in order reproduces the full loss exactly.
    """
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    if isinstance(target, SimilarityMap):
        target = target.matrix
    z = embeddings
    if pair_sample is not None:
        idx = np.asarray(pair_sample, dtype=np.int64)
        z = ad.gather_rows(z, idx)
        if isinstance(target, Tensor):
            target = ad.transpose(
                ad.gather_rows(ad.transpose(ad.gather_rows(target, idx)), idx)
            )
        else:
            target = np.asarray(target)[np.ix_(idx, idx)]
    if not isinstance(target, Tensor):
        target = ad.constant(target)
    if target.shape != (z.shape[0], z.shape[0]):
        raise ad.ShapeError(
            f"target {target.shape} does not match embeddings {z.shape}"
        )
    gram = ad.scalar_mul(ad.matmul(z, ad.transpose(z)), 1.0 / tau)
    return ad.frobenius_sq(ad.sub(target, gram))


def hard_clusters(membership: np.ndarray) -> np.ndarray:
    """Row-argmax cluster ids; ties break toward the lowest cluster index."""
    return np.argmax(membership, axis=1)


def clustering_contrastive_loss(
    embeddings: Tensor, clusters: np.ndarray, tau: float
) -> Tensor:
    """Clustering-based contrastive regularizer over hard cluster ids.

    Positive pairs are distinct nodes sharing a cluster; the denominator
    for an anchored pair adds the similarities of the anchor to every
    node outside its cluster. Singleton clusters contribute no positive
    pairs but still supply negatives.
    """
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    clusters = np.asarray(clusters)
    n = embeddings.shape[0]
    if clusters.shape != (n,):
        raise ad.ShapeError("cluster ids must be one per embedding row")
    same = clusters[:, None] == clusters[None, :]
    positive = same & ~np.eye(n, dtype=bool)
    negative = ~same
    if not negative.any():
        raise SingleClusterError(
            "all nodes share one cluster; no negative pairs exist"
        )
    logits = ad.scalar_mul(
        ad.matmul(embeddings, ad.transpose(embeddings)), 1.0 / tau
    )
    sims = ad.exp(logits)
    neg_per_anchor = ad.sum_rows(ad.elementwise_mul(sims, ad.constant(negative)))
    log_denom = ad.log(ad.add_colvec(sims, neg_per_anchor))
    pair_terms = ad.sub(log_denom, logits)
    return ad.sum_all(ad.elementwise_mul(pair_terms, ad.constant(positive)))


def align_uniform_decomposition(
    target: SimilarityMap | np.ndarray, embeddings: np.ndarray, tau: float
) -> tuple[float, float]:
    """Alignment and uniformity parts of the similarity-guided loss.

    Alignment rewards high inner products where the similarity target is
    large; uniformity penalizes the squared cosine responses over all
    pairs (a log of a geometric mean, accumulated over every anchor).
    Their sum differs from the full loss only by the constant sum of
    squared target entries.
    """
    if isinstance(target, SimilarityMap):
        target = target.matrix
    target = np.asarray(target)
    z = np.asarray(embeddings)
    gram = (z @ z.T) / tau
    align = float(-2.0 * (target * gram).sum())
    uniform = float((gram**2).sum())
    return align, uniform


def total_objective(recon: Tensor, contrast: Tensor | None, lam: float) -> Tensor:
    """Overall objective: reconstruction plus lambda-weighted contrastive term."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    if contrast is None or lam == 0.0:
        return recon
    return ad.add(recon, ad.scalar_mul(contrast, lam))
