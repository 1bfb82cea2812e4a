"""Adam optimizer with bias correction."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .autodiff import Tensor


class AdamState:
    """Per-parameter first/second moment estimates plus hyperparameters.

    Moment slots are keyed by position in the parameter list, which must be
    stable across calls. ``step_count`` increases by exactly one per update.
    """

    def __init__(self, eta: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, epsilon: float = 1e-7):
        self.eta = eta
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.step_count = 0
        self.m: list[np.ndarray] = []
        self.v: list[np.ndarray] = []

    def _ensure(self, params: Sequence[Tensor]) -> None:
        if not self.m:
            self.m = [np.zeros_like(p.data) for p in params]
            self.v = [np.zeros_like(p.data) for p in params]
        elif len(self.m) != len(params):
            raise ValueError(
                f"adam state holds {len(self.m)} slots, got {len(params)} params")


def adam_step(state: AdamState, params: Sequence[Tensor],
              grads: Sequence[np.ndarray] | None = None) -> tuple[Sequence[Tensor], AdamState]:
    """One Adam update, in place on the parameter buffers.

    ``grads`` defaults to each parameter's ``.grad``. Shapes must match the
    parameters exactly.
    """
    state._ensure(params)
    if grads is None:
        grads = [p.grad for p in params]
    if len(grads) != len(params):
        raise ValueError(f"got {len(grads)} grads for {len(params)} params")
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            raise ValueError(f"parameter {i} has no gradient")
        g = np.asarray(g)
        if g.shape != p.data.shape:
            raise ValueError(
                f"parameter {i}: grad shape {g.shape} != param shape {p.data.shape}")
        m, v = state.m[i], state.v[i]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.data -= state.eta * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)
    return params, state
