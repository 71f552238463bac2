"""Ranking metrics for anomaly detection: AUC and Recall@K."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = ["MetricReport", "auc", "recall_at_k", "write_metric_report"]


def auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Probability that a random anomaly outscores a random normal node.

    Rank-based (Mann-Whitney) computation; tied scores count half.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    pos = int(labels.sum())
    neg = labels.size - pos
    if pos == 0 or neg == 0:
        raise ValueError("AUC needs at least one anomaly and one normal node")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(labels.size)
    ranks[order] = np.arange(1, labels.size + 1)
    # average ranks within tie groups
    sorted_scores = scores[order]
    i = 0
    while i < labels.size:
        j = i
        while j + 1 < labels.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        if j > i:
            ranks[order[i : j + 1]] = 0.5 * (i + 1 + j + 1)
        i = j + 1
    return float((ranks[labels].sum() - pos * (pos + 1) / 2) / (pos * neg))


def _ranking(scores: np.ndarray) -> np.ndarray:
    n = scores.shape[0]
    return np.lexsort((np.arange(n), -np.asarray(scores, dtype=float)))


def recall_at_k(scores: np.ndarray, labels: np.ndarray, k: int) -> float:
    """Fraction of all true anomalies among the k highest-scored nodes.

    Score ties break by ascending node index, matching the report ranking.
    """
    labels = np.asarray(labels, dtype=bool)
    n = labels.size
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    total = int(labels.sum())
    if total == 0:
        raise ValueError("recall needs at least one anomaly")
    top = _ranking(scores)[:k]
    return float(labels[top].sum() / total)


@dataclass(frozen=True)
class MetricReport:
    auc: float
    recall_at_k: dict[int, float]
    n: int
    anomaly_count: int

    @classmethod
    def compute(
        cls, scores: np.ndarray, labels: np.ndarray, ks: list[int]
    ) -> "MetricReport":
        labels = np.asarray(labels, dtype=bool)
        return cls(
            auc=auc(scores, labels),
            recall_at_k={int(k): recall_at_k(scores, labels, k) for k in ks},
            n=int(labels.size),
            anomaly_count=int(labels.sum()),
        )


def write_metric_report(report: MetricReport, text_path, json_path) -> None:
    """Emit the same numbers twice: key-value text and JSON, 12 digits."""
    lines = [
        f"auc = {report.auc:.12g}",
        f"n = {report.n}",
        f"anomaly_count = {report.anomaly_count}",
    ]
    for k in sorted(report.recall_at_k):
        lines.append(f"recall_at_{k} = {report.recall_at_k[k]:.12g}")
    Path(text_path).write_text("\n".join(lines) + "\n")
    payload = {
        "auc": float(f"{report.auc:.12g}"),
        "n": report.n,
        "anomaly_count": report.anomaly_count,
        "recall_at_k": {
            str(k): float(f"{v:.12g}") for k, v in sorted(report.recall_at_k.items())
        },
    }
    Path(json_path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
