"""Adam optimizer over tape parameters."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor

__all__ = ["AdamState", "DivergenceError", "adam_step"]


class DivergenceError(RuntimeError):
    """Raised when a non-finite gradient or loss is encountered."""


@dataclass
class AdamState:
    """Per-parameter moment estimates plus the shared hyperparameters.

    Weight decay is added to the raw gradient as ``decay * param`` before
    the moment updates, and only for parameters flagged as weights.
    """

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    first_moment: dict[int, np.ndarray] = field(default_factory=dict)
    second_moment: dict[int, np.ndarray] = field(default_factory=dict)


def adam_step(
    state: AdamState,
    params: list[tuple[str, Tensor, bool]],
    grads: dict[int, np.ndarray],
) -> None:
    """One Adam update, in place on the parameter tensors.

    ``params`` holds (name, tensor, apply_weight_decay) triples; ``grads``
    maps id(tensor) to its gradient. Aborts before touching any parameter
    if some gradient is non-finite.
    """
    for name, p, _ in params:
        g = grads[id(p)]
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient for parameter '{name}'")
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for name, p, decayed in params:
        g = grads[id(p)]
        if decayed and state.weight_decay != 0.0:
            g = g + state.weight_decay * p.value
        key = id(p)
        m = state.first_moment.get(key)
        v = state.second_moment.get(key)
        if m is None:
            m = np.zeros(p.shape)
            v = np.zeros(p.shape)
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        state.first_moment[key] = m
        state.second_moment[key] = v
        p.value = p.value - state.learning_rate * (m / bc1) / (
            np.sqrt(v / bc2) + state.eps
        )
