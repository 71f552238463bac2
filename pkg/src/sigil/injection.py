"""Anomaly injection: clique planting for structural anomalies and
farthest-donor attribute swaps for attribute anomalies.

Both operations return a new graph plus updated labels; the input graph
is never mutated. Structural and attribute anomaly sets stay disjoint
when applied through :func:`apply_plan`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .graphs import AnomalyLabels, MultiViewGraph, View

__all__ = [
    "InjectionPlan",
    "inject_structural",
    "inject_attribute",
    "apply_plan",
]


@dataclass(frozen=True)
class InjectionPlan:
    clique_size: int = 15
    clique_count: int = 0
    attr_count: int = 0
    attr_candidates: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.clique_count and self.clique_size < 2:
            raise ValueError("cliques need at least 2 nodes")
        if self.attr_count and self.attr_candidates < 1:
            raise ValueError("attribute perturbation needs at least 1 candidate")

    @property
    def structural_count(self) -> int:
        return self.clique_size * self.clique_count


def _labels_array(graph: MultiViewGraph) -> np.ndarray:
    if graph.labels is None:
        return np.zeros(graph.n, dtype=bool)
    return graph.labels.flags.copy()


def inject_structural(
    graph: MultiViewGraph, clique_size: int, clique_count: int, seed: int
) -> tuple[MultiViewGraph, AnomalyLabels]:
    """Plant fully connected cliques of random nodes, identical in every view.

    All clique members are labeled anomalous. Cliques are node-disjoint.
    """
    need = clique_size * clique_count
    if need > graph.n:
        raise ValueError(
            f"{clique_count} cliques of {clique_size} nodes exceed n={graph.n}"
        )
    rng = np.random.default_rng(seed)
    chosen = rng.choice(graph.n, size=need, replace=False)
    flags = _labels_array(graph)
    flags[chosen] = True
    rows, cols = [], []
    for c in range(clique_count):
        members = chosen[c * clique_size : (c + 1) * clique_size]
        for i, u in enumerate(members):
            for v in members[i + 1 :]:
                rows.append(u)
                cols.append(v)
    clique_edges = sp.csr_matrix(
        (np.ones(len(rows)), (rows, cols)), shape=(graph.n, graph.n)
    )
    clique_edges = clique_edges + clique_edges.T
    views = []
    for view in graph.views:
        # add only the clique edges not already present; existing weights stay
        novel = clique_edges - clique_edges.multiply(view.adjacency.astype(bool))
        views.append(View.build(view.adjacency + novel, view.features))
    labels = AnomalyLabels.build(flags)
    return MultiViewGraph(n=graph.n, views=tuple(views), labels=labels), labels


def inject_attribute(
    graph: MultiViewGraph, count: int, k: int, seed: int
) -> tuple[MultiViewGraph, AnomalyLabels]:
    """Overwrite each victim's features with its farthest of k candidates.

    Victims are drawn from currently unlabeled nodes. The victim and its
    candidate set are shared across views; each view picks the donor that
    maximizes the squared Euclidean feature distance in that view.
    """
    if k >= graph.n:
        raise ValueError(f"candidate count k={k} must be below n={graph.n}")
    flags = _labels_array(graph)
    pool = np.flatnonzero(~flags)
    if count > pool.size:
        raise ValueError(
            f"cannot pick {count} attribute anomalies from {pool.size} unlabeled nodes"
        )
    rng = np.random.default_rng(seed)
    victims = rng.choice(pool, size=count, replace=False)
    new_features = [view.features.copy() for view in graph.views]
    for i in victims:
        others = np.delete(np.arange(graph.n), i)
        candidates = rng.choice(others, size=k, replace=False)
        for a, view in enumerate(graph.views):
            dists = ((view.features[candidates] - view.features[i]) ** 2).sum(axis=1)
            donor = candidates[int(np.argmax(dists))]
            new_features[a][i] = view.features[donor]
    flags[victims] = True
    views = tuple(
        View.build(view.adjacency, feats)
        for view, feats in zip(graph.views, new_features)
    )
    labels = AnomalyLabels.build(flags)
    return MultiViewGraph(n=graph.n, views=views, labels=labels), labels


def apply_plan(
    graph: MultiViewGraph, plan: InjectionPlan
) -> tuple[MultiViewGraph, AnomalyLabels]:
    """Structural injection first, then attribute injection on the rest."""
    rng = np.random.default_rng(plan.seed)
    struct_seed, attr_seed = rng.integers(0, 2**63 - 1, size=2)
    out = graph
    if plan.clique_count:
        out, _ = inject_structural(out, plan.clique_size, plan.clique_count, struct_seed)
    if plan.attr_count:
        out, _ = inject_attribute(out, plan.attr_count, plan.attr_candidates, attr_seed)
    labels = out.labels if out.labels is not None else AnomalyLabels.build(
        np.zeros(graph.n, dtype=bool)
    )
    if out.labels is None:
        out = MultiViewGraph(n=out.n, views=out.views, labels=labels)
    return out, labels
