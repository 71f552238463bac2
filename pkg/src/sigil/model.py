"""Multi-view hierarchical graph autoencoder.

The encoder stacks graph-convolution layers that, per level, extract
per-view embeddings and a shared row-stochastic soft assignment pooling
fine nodes into supernodes. The coarse adjacency is optionally augmented
with the sigmoid-thresholded assignment similarity so supernodes that
look alike stay connected. The decoder mirrors the encoder with its own
shared unpooling assignments and per-view reconstruction layers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .autodiff import Tensor
from .graphs import MultiViewGraph

__all__ = [
    "GcnLayer",
    "ModelSpec",
    "SigilModel",
    "Parameter",
    "EncodeTrace",
    "DecodeTrace",
    "gcn_forward",
    "encode",
    "decode",
    "initialize",
]

_ACTIVATIONS = ("relu", "linear")


@dataclass
class GcnLayer:
    """One graph convolution: propagate, project, bias, activation."""

    weight: Tensor
    bias: Tensor
    activation: str = "relu"

    def __post_init__(self):
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation '{self.activation}'")


@dataclass(frozen=True)
class ModelSpec:
    """Architecture descriptor; enough to rebuild a model skeleton.

    ``mixture_decode`` selects the unpooling softmax axis: each fine node
    receives a stochastic mixture of supernode representations (scale
    preserving), versus each supernode distributing its representation
    over the fine nodes.
    """

    n: int
    view_dims: tuple[int, ...]
    hidden: int
    clusters: tuple[int, ...]
    augment_adjacency: bool = True
    mixture_decode: bool = False
    tied_unpooling: bool = False

    def __post_init__(self):
        if self.hidden < 1:
            raise ValueError("hidden width must be at least 1")
        if any(d < 1 for d in self.view_dims) or not self.view_dims:
            raise ValueError("every view needs a positive feature width")
        sizes = (self.n, *self.clusters)
        if not self.clusters or sizes[-1] < 2:
            raise ValueError("coarsest level needs at least 2 supernodes")
        for fine, coarse in zip(sizes, sizes[1:]):
            if coarse >= fine:
                raise ValueError(
                    f"cluster counts must strictly decrease, got {sizes}"
                )

    @property
    def num_views(self) -> int:
        return len(self.view_dims)

    @property
    def depth(self) -> int:
        return len(self.clusters)

    @property
    def level_sizes(self) -> tuple[int, ...]:
        return (self.n, *self.clusters)


@dataclass(frozen=True)
class Parameter:
    name: str
    tensor: Tensor
    weight_decay: bool  # decay applies to weights, never biases


@dataclass
class SigilModel:
    spec: ModelSpec
    encoders: list[list[GcnLayer]]  # [view][layer]
    pool_projections: list[Tensor]  # [view], level-0 width alignment
    pooling: list[GcnLayer]  # [layer], shared across views
    decoders: list[list[GcnLayer]]  # [view][layer]
    unpooling: list[GcnLayer]  # [layer], shared across views
    _params: list[Parameter] = field(default_factory=list, repr=False)

    def parameters(self) -> list[Parameter]:
        if not self._params:
            out: list[Parameter] = []
            for a, stack in enumerate(self.encoders):
                for l, layer in enumerate(stack):
                    out.append(Parameter(f"enc.{a}.{l}.weight", layer.weight, True))
                    out.append(Parameter(f"enc.{a}.{l}.bias", layer.bias, False))
            for a, proj in enumerate(self.pool_projections):
                out.append(Parameter(f"pool_proj.{a}", proj, True))
            for l, layer in enumerate(self.pooling):
                out.append(Parameter(f"pool.{l}.weight", layer.weight, True))
                out.append(Parameter(f"pool.{l}.bias", layer.bias, False))
            for a, stack in enumerate(self.decoders):
                for l, layer in enumerate(stack):
                    out.append(Parameter(f"dec.{a}.{l}.weight", layer.weight, True))
                    out.append(Parameter(f"dec.{a}.{l}.bias", layer.bias, False))
            for l, layer in enumerate(self.unpooling):
                out.append(Parameter(f"unpool.{l}.weight", layer.weight, True))
                out.append(Parameter(f"unpool.{l}.bias", layer.bias, False))
            self._params = out
        return self._params

    def attach(self, tape: ad.Tape) -> None:
        for p in self.parameters():
            tape.watch(p.tensor)

    def detach(self) -> None:
        for p in self.parameters():
            p.tensor.tape = None


@dataclass
class EncodeTrace:
    """Everything the encoder produced, per level and view.

    ``assignments[l]`` is the level-(l+1) soft assignment, ``composed`` is
    their product mapping every input node onto the coarsest supernodes.
    ``embeddings[a][l]`` / ``features[a][l+1]`` / ``adjacencies[a][l+1]``
    follow the same level indexing; index 0 of features/adjacencies holds
    the inputs.
    """

    assignments: list[Tensor]
    composed: Tensor
    embeddings: list[list[Tensor]]
    features: list[list[Tensor]]
    adjacencies: list[list]  # level 0 is the input CSR matrix

    def fine_embeddings(self) -> list[Tensor]:
        return [stack[0] for stack in self.embeddings]


@dataclass
class DecodeTrace:
    """Decoder-side assignments (fine x coarse, row-stochastic) and the
    per-view reconstructions; intermediate decoder adjacencies are kept
    for multi-level models."""

    assignments: list[Tensor]
    reconstructions: list[Tensor]
    adjacencies: list[list[Tensor]]  # intermediate decoder-side adjacency per view


def _normalized_propagator(adjacency: sp.spmatrix) -> sp.csr_matrix:
    """Symmetric degree-normalized adjacency with self-loops, as a constant."""
    n = adjacency.shape[0]
    atilde = (adjacency + sp.identity(n, format="csr")).tocsr()
    inv_sqrt = 1.0 / np.sqrt(np.asarray(atilde.sum(axis=1)).ravel())
    d = sp.diags(inv_sqrt)
    return (d @ atilde @ d).tocsr()


def _propagate_dense(adjacency: Tensor, x: Tensor) -> Tensor:
    """Tape-recorded normalized propagation for dense (coarse) adjacency."""
    n = adjacency.shape[0]
    atilde = ad.add(adjacency, ad.constant(np.eye(n)))
    inv_sqrt = ad.rsqrt(ad.sum_rows(atilde))
    norm = ad.scale_rows(ad.scale_cols(atilde, ad.transpose(inv_sqrt)), inv_sqrt)
    return ad.matmul(norm, x)


def gcn_forward(layer: GcnLayer, adjacency, features: Tensor) -> Tensor:
    """Apply one graph convolution.

    ``adjacency`` is either a scipy sparse matrix (treated as constant) or
    a dense tensor produced by a previous pooling level; both are
    normalized as D^-1/2 (A + I) D^-1/2 before propagation.
    """
    projected = ad.matmul(features, layer.weight)
    if sp.issparse(adjacency):
        propagated = ad.sparse_dense_matmul(_normalized_propagator(adjacency), projected)
    else:
        propagated = _propagate_dense(adjacency, projected)
    out = ad.add_bias(propagated, layer.bias)
    if layer.activation == "relu":
        out = ad.relu(out)
    return out


def encode(model: SigilModel, graph: MultiViewGraph) -> EncodeTrace:
    """Run the pooling encoder over every view.

    Per level: per-view embeddings from the view encoders, one shared
    assignment from the summed pooling outputs, pooled features, and the
    (optionally augmented) coarse adjacency.
    """
    spec = model.spec
    if graph.view_dims() != spec.view_dims or graph.n != spec.n:
        raise ValueError(
            f"graph ({graph.n} nodes, dims {graph.view_dims()}) does not match "
            f"model spec ({spec.n} nodes, dims {spec.view_dims})"
        )
    views = range(spec.num_views)
    features: list[list[Tensor]] = [
        [ad.constant(graph.views[a].features)] for a in views
    ]
    adjacencies: list[list] = [[graph.views[a].adjacency] for a in views]
    embeddings: list[list[Tensor]] = [[] for _ in views]
    assignments: list[Tensor] = []
    composed: Tensor | None = None

    for level in range(spec.depth):
        logits: Tensor | None = None
        for a in views:
            adj, x = adjacencies[a][level], features[a][level]
            embeddings[a].append(gcn_forward(model.encoders[a][level], adj, x))
            pool_in = ad.matmul(x, model.pool_projections[a]) if level == 0 else x
            contribution = gcn_forward(model.pooling[level], adj, pool_in)
            logits = contribution if logits is None else ad.add(logits, contribution)
        s = ad.row_softmax(logits)
        assignments.append(s)
        composed = s if composed is None else ad.matmul(composed, s)
        st = ad.transpose(s)
        if spec.augment_adjacency:
            similarity = ad.sigmoid(ad.scalar_add(ad.matmul(s, st), -0.5))
        for a in views:
            features[a].append(ad.matmul(st, embeddings[a][level]))
            adj = adjacencies[a][level]
            if sp.issparse(adj):
                pooled = ad.matmul(st, ad.sparse_dense_matmul(adj, s))
            else:
                pooled = ad.matmul(st, ad.matmul(adj, s))
            if spec.augment_adjacency:
                pooled = ad.add(pooled, ad.matmul(st, ad.matmul(similarity, s)))
            adjacencies[a].append(pooled)

    return EncodeTrace(
        assignments=assignments,
        composed=composed,
        embeddings=embeddings,
        features=features,
        adjacencies=adjacencies,
    )


def decode(model: SigilModel, trace: EncodeTrace) -> DecodeTrace:
    """Run the unpooling decoder back to per-view reconstructions.

    By default a shared unpooling network emits the decoder assignment
    per level: one logit column per fine node, softmax over each
    supernode's row. ``mixture_decode`` flips the softmax axis so each
    fine node receives a stochastic mixture of supernode representations
    instead; ``tied_unpooling`` skips the unpooling network entirely and
    lifts through the matching encoder assignment, which leaves the
    decoder no per-node freedom to memorize reconstructions with.
    """
    spec = model.spec
    depth = spec.depth
    views = range(spec.num_views)
    rep: list[Tensor] = [trace.features[a][depth] for a in views]
    adj: list[Tensor] = [trace.adjacencies[a][depth] for a in views]
    dec_adjacencies: list[list[Tensor]] = [[adj[a]] for a in views]
    assignments: list[Tensor] = []

    for level in range(depth):
        if spec.tied_unpooling:
            # reuse the encoder assignment of the matching level; each fine
            # node keeps its encoder-side distribution over supernodes, so
            # the reconstruction path has no decoder-local per-node freedom
            s = trace.assignments[depth - 1 - level]  # fine x coarse
            lift, drop = s, ad.transpose(s)
        else:
            logits: Tensor | None = None
            for a in views:
                contribution = gcn_forward(model.unpooling[level], adj[a], rep[a])
                logits = contribution if logits is None else ad.add(logits, contribution)
            # logits: coarse x fine
            if spec.mixture_decode:
                s = ad.row_softmax(ad.transpose(logits))  # fine x coarse
                lift, drop = s, ad.transpose(s)
            else:
                s = ad.row_softmax(logits)  # coarse x fine
                lift, drop = ad.transpose(s), s
        assignments.append(s)
        hidden = [
            gcn_forward(model.decoders[a][level], adj[a], rep[a]) for a in views
        ]
        rep = [ad.matmul(lift, hidden[a]) for a in views]
        if level < depth - 1:  # coarsest-to-finest; last level needs no adjacency
            adj = [ad.matmul(lift, ad.matmul(adj[a], drop)) for a in views]
            for a in views:
                dec_adjacencies[a].append(adj[a])

    return DecodeTrace(
        assignments=assignments,
        reconstructions=rep,
        adjacencies=dec_adjacencies,
    )


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def initialize(spec: ModelSpec, seed: int) -> SigilModel:
    """Fresh model with fan-in-scaled uniform weights and zero biases."""
    rng = np.random.default_rng(seed)
    depth = spec.depth
    h = spec.hidden

    def layer(fan_in, fan_out, activation):
        return GcnLayer(
            weight=Tensor(_glorot(rng, fan_in, fan_out)),
            bias=Tensor(np.zeros((1, fan_out))),
            activation=activation,
        )

    encoders = [
        [layer(d if l == 0 else h, h, "relu") for l in range(depth)]
        for d in spec.view_dims
    ]
    pool_projections = [Tensor(_glorot(rng, d, h)) for d in spec.view_dims]
    pooling = [layer(h, spec.clusters[l], "linear") for l in range(depth)]
    def reconstruction_head(d):
        # pooled supernode features carry cluster-size-amplified scale; a
        # zero-started head ramps the output up instead of overshooting
        # the data by orders of magnitude on the first iterations
        return GcnLayer(
            weight=Tensor(np.zeros((h, d))),
            bias=Tensor(np.zeros((1, d))),
            activation="linear",
        )

    decoders = [
        [
            reconstruction_head(d) if l == depth - 1 else layer(h, h, "relu")
            for l in range(depth)
        ]
        for d in spec.view_dims
    ]
    fine_sizes = spec.level_sizes[:-1][::-1]  # widths the decoder climbs back to
    unpooling = [layer(h, fine_sizes[l], "linear") for l in range(depth)]
    return SigilModel(
        spec=spec,
        encoders=encoders,
        pool_projections=pool_projections,
        pooling=pooling,
        decoders=decoders,
        unpooling=unpooling,
    )
