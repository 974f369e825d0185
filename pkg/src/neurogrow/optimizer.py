"""SGD with classic momentum and a cosine learning-rate schedule."""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError


@dataclass
class SgdState:
    base_lr: float = 0.1
    momentum: float = 0.9
    total_steps: int = 1
    velocity: list = field(default_factory=list)

    def __post_init__(self):
        if not self.base_lr >= 0:
            raise ConfigError(f"base_lr must be >= 0, got {self.base_lr}")
        if not 0 <= self.momentum < 1:
            raise ConfigError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.total_steps < 1:
            raise ConfigError(f"total_steps must be >= 1, got {self.total_steps}")


def lr_at(step, state):
    """Cosine decay from ``base_lr`` at step 0 to 0 at ``total_steps``; clamps past the end."""
    t = min(max(step, 0), state.total_steps)
    return state.base_lr * 0.5 * (1.0 + math.cos(math.pi * t / state.total_steps))


def sgd_step(params, grads, state, step, lr=None):
    """In-place update ``v = m*v + g``, ``p -= lr*v``; returns ``params``.

    ``lr`` overrides the scheduled rate (used for segment-restarted schedules).
    """
    if len(params) != len(grads):
        raise DimensionError(f"{len(params)} parameter tensors but {len(grads)} gradients")
    if not state.velocity:
        state.velocity = [np.zeros_like(p) for p in params]
    if len(state.velocity) != len(params):
        raise DimensionError("optimizer state does not match the parameter list; call resize_state after growth")
    rate = lr_at(step, state) if lr is None else lr
    for p, g, v in zip(params, grads, state.velocity):
        if p.shape != g.shape or p.shape != v.shape:
            raise DimensionError(f"shape mismatch: param {p.shape}, grad {g.shape}, velocity {v.shape}")
        v *= state.momentum
        v += g
        p -= rate * v
    return params


def resize_state(state, net):
    """Zero-pad velocity buffers to the network's current parameter shapes.

    Growth only ever appends along an axis, so old entries stay in the
    leading corner of each buffer.
    """
    params = net.parameters()
    if not state.velocity:
        return state
    resized = []
    for v, p in zip(state.velocity, params):
        if v.shape == p.shape:
            resized.append(v)
            continue
        if v.ndim != p.ndim or any(a > b for a, b in zip(v.shape, p.shape)):
            raise DimensionError(f"cannot resize velocity {v.shape} to {p.shape}")
        grown = np.zeros_like(p)
        grown[tuple(slice(0, d) for d in v.shape)] = v
        resized.append(grown)
    state.velocity = resized
    return state
