"""Nadam updates and the two-phase learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .tensor import Tensor


@dataclass
class NadamState:
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: Sequence[Tensor], **kw) -> "NadamState":
        return cls([np.zeros_like(p.data) for p in params],
                   [np.zeros_like(p.data) for p in params], **kw)


def nadam_step(params: Sequence[Tensor], grads: Sequence[np.ndarray | None], state: NadamState,
               lr: float, clip_norm: float | None = None) -> None:
    """Apply one Nadam update in place.

    With ``t`` the post-increment step count::

        m = b1*m + (1-b1)*g
        v = b2*v + (1-b2)*g^2
        theta -= lr * (b1*m/(1-b1^(t+1)) + (1-b1)*g/(1-b1^t)) / (sqrt(v/(1-b2^t)) + eps)

    A ``None`` gradient counts as zero.  Nothing is modified if any gradient
    is non-finite.
    """
    if lr < 0:
        raise ValueError(f"learning rate must be non-negative, got {lr}")
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state disagree in length")
    gs = []
    for i, (p, g) in enumerate(zip(params, grads)):
        g = np.zeros_like(p.data) if g is None else np.asarray(g)
        if g.shape != p.shape:
            raise ValueError(f"gradient {i} has shape {g.shape}, parameter has {p.shape}")
        if not np.all(np.isfinite(g)):
            name = p.name or f"#{i}"
            raise FloatingPointError(f"non-finite gradient for parameter {name}; step aborted")
        gs.append(g)

    if clip_norm is not None:
        total = np.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in gs))
        if total > clip_norm:
            gs = [g * (clip_norm / total) for g in gs]

    b1, b2, eps = state.beta1, state.beta2, state.eps
    state.t += 1
    t = state.t
    c_next = 1.0 - b1 ** (t + 1)
    c_now = 1.0 - b1 ** t
    c_v = 1.0 - b2 ** t
    for p, g, m, v in zip(params, gs, state.m, state.v):
        dt = p.data.dtype.type
        m *= dt(b1)
        m += dt(1.0 - b1) * g
        v *= dt(b2)
        v += dt(1.0 - b2) * g * g
        step = (dt(b1) * m / dt(c_next) + dt(1.0 - b1) * g / dt(c_now)) / (np.sqrt(v / dt(c_v)) + dt(eps))
        p.data -= dt(lr) * step


def lr_schedule(epoch: int, phase1_epochs: int = 20, lr_phase1: float = 0.004,
                lr_phase2: float = 0.0004) -> float:
    """0.004 for the first 20 epochs, 0.0004 afterwards (epochs are 0-indexed)."""
    if epoch < 0:
        raise ValueError(f"epoch must be non-negative, got {epoch}")
    return lr_phase1 if epoch < phase1_epochs else lr_phase2
