"""Full-graph training loop: encode, decode, losses, Adam.

The similarity target is rebuilt from the current soft assignment every
iteration but held constant during that iteration's backward pass
(matching the fixed-assignment premise of the contrastive analysis); a
config switch makes it fully differentiable for experimentation.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor, backward
from .checkpoint import save_model
from .graphs import MultiViewGraph
from .losses import (
    LOSS_VARIANTS,
    NORMALIZATIONS,
    SingleClusterError,
    build_similarity_map,
    build_similarity_map_on_tape,
    clustering_contrastive_loss,
    hard_clusters,
    reconstruction_loss,
    similarity_guided_loss,
    similarity_submatrix,
    total_objective,
)
from .model import DecodeTrace, EncodeTrace, ModelSpec, SigilModel, decode, encode
from .model import initialize as initialize_model
from .optim import AdamState, DivergenceError, adam_step

__all__ = [
    "ConfigError",
    "TrainConfig",
    "TrainLog",
    "LogEntry",
    "ObjectiveResult",
    "initialize",
    "compute_objective",
    "train",
    "write_train_log",
]


class ConfigError(ValueError):
    """A configuration value is out of range or inconsistent."""


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters; defaults follow the reference setup
    (Adam at 1e-3 with 5e-4 weight decay, hidden width 100, unit
    temperature, one pooling level)."""

    iterations: int = 10_000
    learning_rate: float = 1e-3
    weight_decay: float = 5e-4
    hidden: int = 100
    clusters: tuple[int, ...] = (10,)
    lambda_: float = 10.0
    alpha: float = 0.9
    beta: float = 0.0
    tau: float = 1.0
    pair_sample: int = 512
    seed: int = 0
    loss_variant: str = "similarity_guided"
    normalization: str = "symmetric"
    log_interval: int = 100
    checkpoint_interval: int = 0
    augment: bool = True
    detach_similarity: bool = True
    mixture_decode: bool = False
    tied_unpooling: bool = False

    def validate(self) -> None:
        checks = [
            (self.iterations >= 1, "iterations must be at least 1"),
            (self.learning_rate > 0, "learning rate must be positive"),
            (self.weight_decay >= 0, "weight decay must be non-negative"),
            (self.hidden >= 1, "hidden width must be at least 1"),
            (len(self.clusters) >= 1, "need at least one pooling level"),
            (all(c >= 2 for c in self.clusters), "cluster counts must be >= 2"),
            (self.lambda_ >= 0, "lambda must be non-negative"),
            (0.0 <= self.alpha <= 1.0, "alpha must be in [0, 1]"),
            (0.0 <= self.beta <= 1.0, "beta must be in [0, 1]"),
            (self.tau > 0, "tau must be positive"),
            (self.pair_sample >= 2, "pair sample size must be at least 2"),
            (self.loss_variant in LOSS_VARIANTS,
             f"loss variant must be one of {LOSS_VARIANTS}"),
            (self.normalization in NORMALIZATIONS,
             f"normalization must be one of {NORMALIZATIONS}"),
            (self.log_interval >= 1, "log interval must be at least 1"),
            (self.checkpoint_interval >= 0, "checkpoint interval must be >= 0"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)


@dataclass(frozen=True)
class LogEntry:
    iteration: int
    total: float
    recon: float
    contrast: float
    wall_time: float
    grad_norm: float


@dataclass
class TrainLog:
    entries: list[LogEntry] = field(default_factory=list)
    contrast_skipped: int = 0  # iterations where no valid pairs existed


@dataclass
class ObjectiveResult:
    total: Tensor
    recon: Tensor
    contrast: Tensor | None
    trace: EncodeTrace
    dec_trace: DecodeTrace
    contrast_degenerate: bool = False


def initialize(spec: ModelSpec, seed: int) -> SigilModel:
    """Seeded Glorot-style initialization (re-exported for convenience)."""
    return initialize_model(spec, seed)


def _aggregated_embeddings(trace: EncodeTrace) -> Tensor:
    z = None
    for fine in trace.fine_embeddings():
        z = fine if z is None else ad.add(z, fine)
    return z


def compute_objective(
    model: SigilModel,
    graph: MultiViewGraph,
    cfg: TrainConfig,
    pair_indices: np.ndarray | None = None,
    frozen_target: np.ndarray | None = None,
    frozen_clusters: np.ndarray | None = None,
) -> ObjectiveResult:
    """Forward pass and objective for one iteration.

    ``frozen_target`` / ``frozen_clusters`` pin the contrastive target and
    the hard cluster ids to externally supplied constants; the gradient
    audit uses this to keep the objective a fixed function of the
    parameters while it perturbs them.
    """
    trace = encode(model, graph)
    dec = decode(model, trace)
    recon = reconstruction_loss([v.features for v in graph.views], dec.reconstructions)
    variant = cfg.loss_variant
    if variant == "none" or cfg.lambda_ == 0.0:
        return ObjectiveResult(recon, recon, None, trace, dec)

    zhat = ad.row_normalize(_aggregated_embeddings(trace))
    adjacencies = [v.adjacency for v in graph.views]
    contrast: Tensor | None = None
    degenerate = False

    if variant in ("similarity_guided", "plain_l2"):
        if frozen_target is not None:
            contrast = similarity_guided_loss(frozen_target, zhat, cfg.tau, pair_indices)
        elif cfg.detach_similarity:
            membership = trace.composed.value
            if pair_indices is not None:
                if variant == "similarity_guided":
                    target = similarity_submatrix(
                        membership, adjacencies, cfg.alpha, cfg.normalization,
                        pair_indices,
                    )
                else:
                    sub = membership[pair_indices]
                    target = sub @ sub.T
                z_sub = ad.gather_rows(zhat, pair_indices)
                contrast = similarity_guided_loss(target, z_sub, cfg.tau)
            else:
                if variant == "similarity_guided":
                    target = build_similarity_map(
                        membership, adjacencies, cfg.alpha, cfg.normalization
                    ).matrix
                else:
                    target = membership @ membership.T
                contrast = similarity_guided_loss(target, zhat, cfg.tau)
        else:
            if variant == "similarity_guided":
                target = build_similarity_map_on_tape(
                    trace.composed, adjacencies, cfg.alpha, cfg.normalization
                )
            else:
                target = ad.matmul(trace.composed, ad.transpose(trace.composed))
            contrast = similarity_guided_loss(target, zhat, cfg.tau, pair_indices)
    else:  # clustering_l1
        clusters = (
            frozen_clusters
            if frozen_clusters is not None
            else hard_clusters(trace.composed.value)
        )
        try:
            contrast = clustering_contrastive_loss(zhat, clusters, cfg.tau)
        except SingleClusterError:
            degenerate = True

    total = total_objective(recon, contrast, cfg.lambda_)
    return ObjectiveResult(total, recon, contrast, trace, dec, degenerate)


def train(
    graph: MultiViewGraph,
    cfg: TrainConfig,
    inspect=None,
    checkpoint_path: str | Path | None = None,
) -> tuple[SigilModel, TrainLog]:
    """Train a fresh model on the full graph for a fixed iteration budget.

    ``inspect(iteration, result)`` runs after each forward pass when
    given (used by invariant checks). Aborts with a diagnostic if the
    objective turns non-finite; periodic checkpoints are written
    atomically so an interrupted run keeps its last complete one.
    """
    cfg.validate()
    spec = ModelSpec(
        n=graph.n,
        view_dims=graph.view_dims(),
        hidden=cfg.hidden,
        clusters=cfg.clusters,
        augment_adjacency=cfg.augment,
        mixture_decode=cfg.mixture_decode,
        tied_unpooling=cfg.tied_unpooling,
    )
    seed_rng = np.random.default_rng(cfg.seed)
    init_seed = int(seed_rng.integers(2**63 - 1))
    sample_rng = np.random.default_rng(int(seed_rng.integers(2**63 - 1)))
    model = initialize_model(spec, init_seed)
    params = model.parameters()
    adam = AdamState(
        learning_rate=cfg.learning_rate, weight_decay=cfg.weight_decay
    )
    triples = [(p.name, p.tensor, p.weight_decay) for p in params]
    log = TrainLog()
    needs_pairs = cfg.loss_variant in ("similarity_guided", "plain_l2")
    p = min(cfg.pair_sample, graph.n)
    start = time.perf_counter()

    for it in range(1, cfg.iterations + 1):
        tape = Tape()
        model.attach(tape)
        idx = None
        if needs_pairs and cfg.lambda_ > 0 and p < graph.n:
            idx = np.sort(sample_rng.choice(graph.n, size=p, replace=False))
        result = compute_objective(model, graph, cfg, pair_indices=idx)
        total_value = result.total.item()
        if not np.isfinite(total_value):
            raise DivergenceError(
                f"objective became non-finite at iteration {it}"
            )
        if result.contrast_degenerate:
            log.contrast_skipped += 1
        if inspect is not None:
            inspect(it, result)
        grads = backward(tape, result.total)
        grad_norm = float(
            np.sqrt(sum(float((g**2).sum()) for g in grads.values()))
        )
        adam_step(adam, triples, grads)
        if it == 1 or it % cfg.log_interval == 0 or it == cfg.iterations:
            log.entries.append(
                LogEntry(
                    iteration=it,
                    total=total_value,
                    recon=result.recon.item(),
                    contrast=result.contrast.item() if result.contrast is not None else 0.0,
                    wall_time=time.perf_counter() - start,
                    grad_norm=grad_norm,
                )
            )
        if (
            checkpoint_path is not None
            and cfg.checkpoint_interval
            and it % cfg.checkpoint_interval == 0
        ):
            save_model(model, checkpoint_path)

    model.detach()
    if log.contrast_skipped:
        warnings.warn(
            f"contrastive term skipped on {log.contrast_skipped} iterations "
            "(all nodes collapsed into one cluster)",
            stacklevel=2,
        )
    return model, log


def write_train_log(log: TrainLog, path, timing_path=None) -> None:
    """Write the loss curve; wall times go to a separate file because they
    are the one column that cannot reproduce bit-identically."""
    lines = ["iteration total recon contrast grad_norm"]
    for e in log.entries:
        lines.append(
            f"{e.iteration} {e.total:.12g} {e.recon:.12g} "
            f"{e.contrast:.12g} {e.grad_norm:.12g}"
        )
    Path(path).write_text("\n".join(lines) + "\n")
    if timing_path is not None:
        tlines = ["iteration wall_time"]
        for e in log.entries:
            tlines.append(f"{e.iteration} {e.wall_time:.6f}")
        Path(timing_path).write_text("\n".join(tlines) + "\n")
