"""Per-node anomaly scores: reconstruction error, minimum Mahalanobis
distance to cluster centroids, and their normalized combination."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graphs import MultiViewGraph
from .losses import hard_clusters
from .model import SigilModel, decode, encode

__all__ = [
    "ClusterStats",
    "ScoreReport",
    "InferenceResult",
    "model_outputs",
    "reconstruction_scores",
    "mahalanobis_scores",
    "combine_scores",
    "score_graph",
    "write_score_report",
    "read_score_report",
]

NORMALIZERS = ("zscore", "minmax", "none")


@dataclass(frozen=True)
class InferenceResult:
    reconstructions: list[np.ndarray]
    fine_embeddings: list[np.ndarray]
    membership: np.ndarray


def model_outputs(model: SigilModel, graph: MultiViewGraph) -> InferenceResult:
    """One tape-less forward pass; returns plain arrays."""
    model.detach()
    trace = encode(model, graph)
    dec = decode(model, trace)
    return InferenceResult(
        reconstructions=[t.value for t in dec.reconstructions],
        fine_embeddings=[t.value for t in trace.fine_embeddings()],
        membership=trace.composed.value,
    )


def reconstruction_scores(
    graph: MultiViewGraph, model: SigilModel, outputs: InferenceResult | None = None
) -> np.ndarray:
    """Summed squared reconstruction error per node, over all views."""
    outputs = outputs or model_outputs(model, graph)
    scores = np.zeros(graph.n)
    for view, xhat in zip(graph.views, outputs.reconstructions):
        scores += ((view.features - xhat) ** 2).sum(axis=1)
    return scores


@dataclass(frozen=True)
class ClusterStats:
    """Per-cluster, per-view sample mean and ridge-regularized covariance."""

    cluster_ids: np.ndarray
    member_counts: np.ndarray
    means: list[list[np.ndarray]]  # [cluster][view]
    covariances: list[list[np.ndarray]]  # [cluster][view]


def _cluster_stats(
    embeddings: list[np.ndarray], clusters: np.ndarray, ridge: float | None
) -> ClusterStats:
    ids = np.unique(clusters)
    counts = np.array([(clusters == k).sum() for k in ids])
    means, covs = [], []
    small = [int(k) for k, c in zip(ids, counts) if c < 2]
    if small:
        warnings.warn(
            f"clusters {small} have fewer than 2 members; "
            "falling back to identity covariance",
            stacklevel=3,
        )
    for k in ids:
        member = clusters == k
        mu_k, cov_k = [], []
        for z in embeddings:
            pts = z[member]
            d = z.shape[1]
            mu = pts.mean(axis=0)
            if pts.shape[0] >= 2:
                dev = pts - mu
                cov = dev.T @ dev / (pts.shape[0] - 1)
            else:
                cov = np.eye(d)
            r = ridge
            if r is None:
                r = max(1e-4 * np.trace(cov) / d, 1e-12)
            cov = cov + r * np.eye(d)
            mu_k.append(mu)
            cov_k.append(cov)
        means.append(mu_k)
        covs.append(cov_k)
    return ClusterStats(ids, counts, means, covs)


def mahalanobis_scores(
    embeddings: list[np.ndarray],
    clusters: np.ndarray,
    ridge: float | None = None,
    per_view_min: bool = False,
) -> np.ndarray:
    """Distance of each node to the nearest cluster, summed over views.

    ``ridge`` is added to every covariance diagonal; by default it scales
    with the covariance trace so inversion stays well posed. The default
    takes the minimum over clusters of the view-summed distance; with
    ``per_view_min`` each view picks its own nearest cluster first.
    """
    clusters = np.asarray(clusters)
    if not embeddings or any(z.shape[0] != clusters.shape[0] for z in embeddings):
        raise ValueError("embeddings and cluster ids disagree on node count")
    if ridge is not None and ridge < 0:
        raise ValueError("ridge must be non-negative")
    stats = _cluster_stats(embeddings, clusters, ridge)
    n = clusters.shape[0]
    num_k = stats.cluster_ids.shape[0]
    num_v = len(embeddings)
    per = np.empty((num_k, num_v, n))
    for ki in range(num_k):
        for a, z in enumerate(embeddings):
            dev = z - stats.means[ki][a]
            sol = np.linalg.solve(stats.covariances[ki][a], dev.T)
            per[ki, a] = (dev.T * sol).sum(axis=0)
    if per_view_min:
        return per.min(axis=0).sum(axis=0)
    return per.sum(axis=1).min(axis=0)


def _normalize(scores: np.ndarray, normalizer: str) -> np.ndarray:
    if normalizer == "none":
        return scores.astype(float)
    if normalizer == "zscore":
        std = scores.std()
        return np.zeros_like(scores) if std == 0 else (scores - scores.mean()) / std
    if normalizer == "minmax":
        span = scores.max() - scores.min()
        return np.zeros_like(scores) if span == 0 else (scores - scores.min()) / span
    raise ValueError(f"unknown normalizer '{normalizer}'")


@dataclass(frozen=True)
class ScoreReport:
    score1: np.ndarray
    score2: np.ndarray
    combined: np.ndarray
    beta: float
    ranking: np.ndarray  # node indices, highest combined score first
    cluster_assignment: np.ndarray


def combine_scores(
    score1: np.ndarray,
    score2: np.ndarray,
    beta: float,
    normalizer: str = "zscore",
    cluster_assignment: np.ndarray | None = None,
) -> ScoreReport:
    """Mix the two scores and rank nodes by the result, descending.

    The raw scores live on incompatible scales, so each is normalized
    per-vector before mixing; ``normalizer='none'`` keeps the literal
    convex combination. Ranking ties break by ascending node index.
    """
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must be in [0, 1], got {beta}")
    if normalizer not in NORMALIZERS:
        raise ValueError(f"unknown normalizer '{normalizer}'")
    score1 = np.asarray(score1, dtype=float)
    score2 = np.asarray(score2, dtype=float)
    if score1.shape != score2.shape:
        raise ValueError("score vectors disagree on length")
    combined = (1.0 - beta) * _normalize(score1, normalizer) + beta * _normalize(
        score2, normalizer
    )
    n = combined.shape[0]
    ranking = np.lexsort((np.arange(n), -combined))
    if cluster_assignment is None:
        cluster_assignment = np.zeros(n, dtype=np.int64)
    return ScoreReport(
        score1=score1,
        score2=score2,
        combined=combined,
        beta=float(beta),
        ranking=ranking,
        cluster_assignment=np.asarray(cluster_assignment, dtype=np.int64),
    )


def score_graph(
    graph: MultiViewGraph,
    model: SigilModel,
    beta: float,
    normalizer: str = "zscore",
    ridge: float | None = None,
    per_view_min: bool = False,
) -> ScoreReport:
    """Full scoring pipeline: forward pass, both scores, combination."""
    outputs = model_outputs(model, graph)
    clusters = hard_clusters(outputs.membership)
    s1 = reconstruction_scores(graph, model, outputs)
    s2 = mahalanobis_scores(
        outputs.fine_embeddings, clusters, ridge=ridge, per_view_min=per_view_min
    )
    return combine_scores(s1, s2, beta, normalizer, cluster_assignment=clusters)


def write_score_report(report: ScoreReport, path) -> None:
    """Line-per-node report; floats carry 12 significant digits."""
    n = report.combined.shape[0]
    rank_of = np.empty(n, dtype=np.int64)
    rank_of[report.ranking] = np.arange(1, n + 1)
    lines = [f"# beta = {report.beta:.12g}", "index score1 score2 combined rank cluster"]
    for i in range(n):
        lines.append(
            f"{i} {report.score1[i]:.12g} {report.score2[i]:.12g} "
            f"{report.combined[i]:.12g} {rank_of[i]} {report.cluster_assignment[i]}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def read_score_report(path) -> ScoreReport:
    lines = Path(path).read_text().splitlines()
    beta = 0.0
    rows = []
    for ln in lines:
        if ln.startswith("#"):
            if "beta" in ln:
                beta = float(ln.split("=", 1)[1])
            continue
        if ln.strip() and not ln.startswith("index"):
            rows.append(ln.split())
    n = len(rows)
    s1 = np.empty(n)
    s2 = np.empty(n)
    combined = np.empty(n)
    rank_of = np.empty(n, dtype=np.int64)
    cluster = np.empty(n, dtype=np.int64)
    for row in rows:
        i = int(row[0])
        s1[i], s2[i], combined[i] = float(row[1]), float(row[2]), float(row[3])
        rank_of[i], cluster[i] = int(row[4]), int(row[5])
    ranking = np.argsort(rank_of, kind="stable")
    return ScoreReport(s1, s2, combined, beta, ranking, cluster)
