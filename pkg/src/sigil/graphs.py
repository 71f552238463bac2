"""Multi-view attributed graph types and file ingestion.

A multi-view graph is one node set observed through several views, each
with its own sparse adjacency and dense feature matrix. Graphs are
immutable after construction and safe to share across threads.

File formats:

* edge file: one ``src<TAB>dst[<TAB>weight]`` line per edge, 0-based
  indices, ``#`` comments;
* feature file: header line ``n d`` then n lines of d space-separated
  decimal floats;
* label file: one anomalous node index per line;
* bundle manifest: flat ``key = value`` file listing the per-view edge
  and feature files (paths relative to the manifest).
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

__all__ = [
    "GraphFormatError",
    "View",
    "AnomalyLabels",
    "MultiViewGraph",
    "load_graph",
    "load_bundle",
    "write_bundle",
    "synthesize_views",
]


class GraphFormatError(ValueError):
    """Malformed or inconsistent graph input."""


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class View:
    """One view: sparse symmetric adjacency plus dense node features."""

    adjacency: sp.csr_matrix
    features: np.ndarray
    degree: np.ndarray

    @classmethod
    def build(cls, adjacency: sp.spmatrix, features: np.ndarray) -> "View":
        adj = sp.csr_matrix(adjacency, dtype=np.float64, copy=True)
        adj.sum_duplicates()
        feats = np.asarray(features, dtype=np.float64)
        n = adj.shape[0]
        if adj.shape != (n, n):
            raise GraphFormatError(f"adjacency must be square, got {adj.shape}")
        if feats.ndim != 2 or feats.shape[0] != n:
            raise GraphFormatError(
                f"feature row count {feats.shape[0] if feats.ndim == 2 else feats.shape} != n={n}"
            )
        if adj.nnz and adj.data.min() < 0:
            raise GraphFormatError("adjacency entries must be non-negative")
        if adj.diagonal().any():
            raise GraphFormatError("adjacency must have a zero diagonal")
        if (adj != adj.T).nnz != 0:
            raise GraphFormatError("adjacency must be symmetric")
        degree = np.asarray(adj.sum(axis=1)).ravel()
        adj.data.setflags(write=False)
        return cls(adj, _freeze(feats), _freeze(degree))

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def edge_count(self) -> int:
        return sp.triu(self.adjacency, k=1).nnz


@dataclass(frozen=True)
class AnomalyLabels:
    """Boolean anomaly flag per node."""

    flags: np.ndarray

    @classmethod
    def build(cls, flags: np.ndarray) -> "AnomalyLabels":
        return cls(_freeze(np.asarray(flags, dtype=bool).copy()))

    @property
    def count(self) -> int:
        return int(self.flags.sum())

    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.flags)


@dataclass(frozen=True)
class MultiViewGraph:
    n: int
    views: tuple[View, ...]
    labels: AnomalyLabels | None = None

    def __post_init__(self):
        if not self.views:
            raise GraphFormatError("a graph needs at least one view")
        for i, v in enumerate(self.views):
            if v.n != self.n:
                raise GraphFormatError(
                    f"view {i} has {v.n} nodes, expected {self.n}"
                )
        if self.labels is not None and self.labels.flags.shape != (self.n,):
            raise GraphFormatError("label vector length != n")

    @property
    def num_views(self) -> int:
        return len(self.views)

    def view_dims(self) -> tuple[int, ...]:
        return tuple(v.dim for v in self.views)


# ---------------------------------------------------------------------------
# parsing


def _parse_edge_file(path: str | os.PathLike, n: int) -> sp.csr_matrix:
    edges: dict[tuple[int, int], float] = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as err:
        raise GraphFormatError(f"unreadable edge file {path}: {err}") from err
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (2, 3):
            raise GraphFormatError(f"{path}:{lineno}: expected 'src dst [weight]'")
        try:
            u, v = int(parts[0]), int(parts[1])
            w = float(parts[2]) if len(parts) == 3 else 1.0
        except ValueError as err:
            raise GraphFormatError(f"{path}:{lineno}: {err}") from err
        if not (0 <= u < n and 0 <= v < n):
            raise GraphFormatError(
                f"{path}:{lineno}: node index out of range for n={n}"
            )
        if w < 0:
            raise GraphFormatError(f"{path}:{lineno}: negative edge weight")
        if u == v:
            continue  # self-loops stripped; GCN layers re-add their own
        edges[(min(u, v), max(u, v))] = w
    if edges:
        pairs = np.array(sorted(edges), dtype=np.int64)
        weights = np.array([edges[(u, v)] for u, v in map(tuple, pairs)])
        rows = np.concatenate([pairs[:, 0], pairs[:, 1]])
        cols = np.concatenate([pairs[:, 1], pairs[:, 0]])
        data = np.concatenate([weights, weights])
    else:
        rows = cols = np.zeros(0, dtype=np.int64)
        data = np.zeros(0)
    return sp.csr_matrix((data, (rows, cols)), shape=(n, n))


def _parse_feature_file(path: str | os.PathLike) -> np.ndarray:
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as err:
        raise GraphFormatError(f"unreadable feature file {path}: {err}") from err
    if not lines:
        raise GraphFormatError(f"{path}: empty feature file")
    head = lines[0].split()
    if len(head) != 2:
        raise GraphFormatError(f"{path}: header must be 'n d'")
    n, d = int(head[0]), int(head[1])
    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) != n:
        raise GraphFormatError(
            f"{path}: feature row count {len(body)} != n={n}"
        )
    out = np.empty((n, d))
    for i, ln in enumerate(body):
        vals = ln.split()
        if len(vals) != d:
            raise GraphFormatError(f"{path}: row {i} has {len(vals)} values, expected {d}")
        out[i] = [float(v) for v in vals]
    return out


def _parse_label_file(path: str | os.PathLike, n: int) -> AnomalyLabels:
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as err:
        raise GraphFormatError(f"unreadable label file {path}: {err}") from err
    flags = np.zeros(n, dtype=bool)
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        idx = int(line)
        if not 0 <= idx < n:
            raise GraphFormatError(
                f"{path}:{lineno}: node index out of range for n={n}"
            )
        flags[idx] = True
    return AnomalyLabels.build(flags)


def load_graph(
    edge_files: list[str | os.PathLike],
    feature_files: list[str | os.PathLike],
    label_file: str | os.PathLike | None = None,
) -> MultiViewGraph:
    """Load one edge file and one feature file per view, plus optional labels.

    Edges are symmetrized (the reverse edge is added if absent) and
    deduplicated; self-loops are stripped.
    """
    if len(edge_files) != len(feature_files) or not edge_files:
        raise GraphFormatError("need one edge file and one feature file per view")
    feats = [_parse_feature_file(p) for p in feature_files]
    n = feats[0].shape[0]
    for p, f in zip(feature_files, feats):
        if f.shape[0] != n:
            raise GraphFormatError(f"{p}: views disagree on node count")
    views = tuple(
        View.build(_parse_edge_file(ep, n), f)
        for ep, f in zip(edge_files, feats)
    )
    labels = _parse_label_file(label_file, n) if label_file is not None else None
    return MultiViewGraph(n=n, views=views, labels=labels)


# ---------------------------------------------------------------------------
# bundle manifest


def _parse_keyvalue(path: str | os.PathLike) -> dict[str, str]:
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as err:
        raise GraphFormatError(f"unreadable bundle manifest {path}: {err}") from err
    out: dict[str, str] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise GraphFormatError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def load_bundle(manifest_path: str | os.PathLike) -> MultiViewGraph:
    """Load a graph from a bundle manifest file."""
    manifest_path = Path(manifest_path)
    kv = _parse_keyvalue(manifest_path)
    try:
        num_views = int(kv["views"])
    except KeyError as err:
        raise GraphFormatError(f"{manifest_path}: missing 'views' key") from err
    base = manifest_path.parent
    edge_files, feature_files = [], []
    for i in range(num_views):
        try:
            edge_files.append(base / kv[f"edges.{i}"])
            feature_files.append(base / kv[f"features.{i}"])
        except KeyError as err:
            raise GraphFormatError(
                f"{manifest_path}: missing file entry for view {i}"
            ) from err
    label_file = base / kv["labels"] if "labels" in kv else None
    return load_graph(edge_files, feature_files, label_file)


def _format_float(x: float) -> str:
    return repr(float(x))


def write_bundle(
    graph: MultiViewGraph,
    out_dir: str | os.PathLike,
    name: str = "graph",
    write_labels: bool = True,
) -> Path:
    """Write edge/feature/label files plus a manifest; returns the manifest path.

    Feature values are written in shortest round-trip decimal form, so
    load -> write -> load is exact at 64-bit.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = [f"# graph bundle: {name}", f"views = {graph.num_views}"]
    for i, view in enumerate(graph.views):
        edge_name = f"{name}.view{i}.edges"
        feat_name = f"{name}.view{i}.features"
        tri = sp.triu(view.adjacency, k=1).tocoo()
        order = np.lexsort((tri.col, tri.row))
        with open(out / edge_name, "w") as fh:
            for u, v, w in zip(tri.row[order], tri.col[order], tri.data[order]):
                if w == 1.0:
                    fh.write(f"{u}\t{v}\n")
                else:
                    fh.write(f"{u}\t{v}\t{_format_float(w)}\n")
        with open(out / feat_name, "w") as fh:
            fh.write(f"{graph.n} {view.dim}\n")
            for row in view.features:
                fh.write(" ".join(_format_float(x) for x in row) + "\n")
        lines.append(f"edges.{i} = {edge_name}")
        lines.append(f"features.{i} = {feat_name}")
    if write_labels and graph.labels is not None:
        label_name = f"{name}.labels"
        with open(out / label_name, "w") as fh:
            for idx in graph.labels.indices():
                fh.write(f"{idx}\n")
        lines.append(f"labels = {label_name}")
    manifest = out / f"{name}.bundle"
    manifest.write_text("\n".join(lines) + "\n")
    return manifest


# ---------------------------------------------------------------------------
# view synthesis


def synthesize_views(
    single_view: View,
    num_views: int,
    mask_prob: float,
    seed: int,
) -> MultiViewGraph:
    """Derive a multi-view graph from one view by random feature masking.

    Every generated view shares the input adjacency; each feature entry is
    independently zeroed with probability ``mask_prob``.
    """
    if not 0.0 <= mask_prob < 1.0:
        raise ValueError(f"mask_prob must be in [0, 1), got {mask_prob}")
    if num_views < 2:
        raise ValueError("num_views must be at least 2")
    rng = np.random.default_rng(seed)
    views = []
    for _ in range(num_views):
        if mask_prob == 0.0:
            masked = single_view.features.copy()
        else:
            keep = rng.random(single_view.features.shape) >= mask_prob
            masked = np.where(keep, single_view.features, 0.0)
        views.append(View.build(single_view.adjacency, masked))
    return MultiViewGraph(n=single_view.n, views=tuple(views))
