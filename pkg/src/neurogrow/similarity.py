"""Neuron-similarity regularizer.

For a layer's neuron matrix ``W`` (one row per output neuron) this module
computes the cosine-similarity map between rows, the mean absolute
off-diagonal similarity ``mu``, a log-ratio penalty on the change of the
layer's total weight sum since the last growth event, their weighted
combination, and analytic gradients of all of them.
"""

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, UsageError
from .tensor import DTYPE, row_l2_normalize

log = logging.getLogger(__name__)


@dataclass
class RegConfig:
    lam: float = 0.1
    n_iters: int = 15
    step_size: float = 1e-2
    enable_sim_loss: bool = True
    enable_weight_penalty: bool = True
    # evaluate log(|s_cur / s_prev|) as printed instead of the symmetric |log| deviation
    literal_eq5: bool = False
    epsilon: float = 1e-12
    # interleave a task-loss gradient into every post-growth iteration
    with_task_loss: bool = False

    def __post_init__(self):
        if self.lam < 0:
            raise ConfigError(f"reg.lam must be >= 0, got {self.lam}")
        if int(self.n_iters) != self.n_iters or self.n_iters < 1:
            raise ConfigError(f"reg.n_iters must be an integer >= 1, got {self.n_iters}")
        if not self.step_size >= 0:
            raise ConfigError(f"reg.step_size must be >= 0, got {self.step_size}")
        if not self.epsilon > 0:
            raise ConfigError(f"reg.epsilon must be > 0, got {self.epsilon}")

    @property
    def active(self):
        return self.enable_sim_loss or self.enable_weight_penalty


@dataclass
class LayerSnapshot:
    """Total weight sum of a layer, captured right after a growth event."""

    weight_sum_previous: float

    @classmethod
    def capture(cls, w):
        return cls(float(np.sum(w)))


def similarity_map(w):
    """Pairwise cosine similarity between the rows of ``w``.

    Zero rows have zero similarity with everything, including themselves.
    """
    u, _ = row_l2_normalize(w)
    return u @ u.T


def mean_offdiag_abs(c):
    """Mean of ``|c[i, j]|`` over the ``n(n-1)`` ordered pairs ``i != j``; 0 when n < 2."""
    c = np.asarray(c, dtype=DTYPE)
    n = c.shape[0]
    if n < 2:
        return 0.0
    off = ~np.eye(n, dtype=bool)
    return float(np.abs(c[off]).sum() / (n * (n - 1)))


def similarity_loss_grad(w):
    """Return ``(mu, dmu/dw)``.

    The gradient goes through the per-row normalisation, so each row's
    gradient is orthogonal to that row. ``sign(0)`` is taken as 0.
    """
    w = np.asarray(w, dtype=DTYPE)
    n = w.shape[0]
    if n < 2:
        return 0.0, np.zeros_like(w)
    u, zero_rows = row_l2_normalize(w)
    c = u @ u.T
    mu = mean_offdiag_abs(c)
    g_c = np.sign(c) / (n * (n - 1))
    np.fill_diagonal(g_c, 0.0)
    g_u = (g_c + g_c.T) @ u
    norms = np.sqrt(np.einsum("ij,ij->i", w, w))
    norms[zero_rows] = 1.0
    radial = np.einsum("ij,ij->i", g_u, u)
    grad = (g_u - radial[:, None] * u) / norms[:, None]
    grad[zero_rows] = 0.0
    return mu, grad


def weight_change_penalty(w, snap, cfg):
    """Penalty on the change of ``sum(w)`` relative to the snapshot; returns ``(value, grad)``.

    Default: ``|log(|s_cur| / max(|s_prev|, eps))|``. With ``cfg.literal_eq5``:
    ``log(|s_cur / s_prev|)``, which is signed. A snapshot with
    ``|s_prev| <= eps`` disables the penalty for the layer, so ``eps`` acts
    as a floor and the kink sits exactly at ``|s_cur| == |s_prev|``.
    """
    w = np.asarray(w, dtype=DTYPE)
    if snap is None:
        raise UsageError("weight_change_penalty needs a snapshot captured at the last growth event")
    s_prev = snap.weight_sum_previous
    eps = cfg.epsilon
    if abs(s_prev) <= eps:
        log.warning("degenerate snapshot (|weight sum| = %g <= %g); weight penalty disabled", abs(s_prev), eps)
        return 0.0, np.zeros_like(w)
    s_cur = float(np.sum(w))
    # keep the log finite if the sum collapses to zero
    if abs(s_cur) <= eps:
        s_cur = math.copysign(eps, s_cur) if s_cur else eps
    if cfg.literal_eq5:
        value = math.log(abs(s_cur / s_prev))
        return value, np.full_like(w, 1.0 / s_cur)
    ratio_log = math.log(abs(s_cur) / max(abs(s_prev), eps))
    sign = (ratio_log > 0) - (ratio_log < 0)
    return abs(ratio_log), np.full_like(w, sign / s_cur)


class RegTerms(NamedTuple):
    value: float
    grad: np.ndarray
    mu: float
    penalty: float


def reg_terms(w, snap, cfg):
    """Evaluate both regularizer components and their flag-weighted combination."""
    w = np.asarray(w, dtype=DTYPE)
    mu, g_mu = similarity_loss_grad(w)
    value = 0.0
    grad = np.zeros_like(w)
    if cfg.enable_sim_loss:
        value += mu
        grad += g_mu
    penalty = 0.0
    if cfg.enable_weight_penalty:
        penalty, g_pen = weight_change_penalty(w, snap, cfg)
        value += cfg.lam * penalty
        grad += cfg.lam * g_pen
    elif snap is not None and abs(snap.weight_sum_previous) > cfg.epsilon:
        penalty, _ = weight_change_penalty(w, snap, cfg)
    return RegTerms(value, grad, mu, penalty)


def combined_reg_loss(w, snap, cfg):
    """``[sim]*mu + [penalty]*lam*penalty`` and its gradient."""
    terms = reg_terms(w, snap, cfg)
    return terms.value, terms.grad


def reg_step(w, snap, cfg):
    """One gradient-descent step on the combined loss; returns ``(new_w, loss_before)``."""
    w = np.asarray(w, dtype=DTYPE)
    value, grad = combined_reg_loss(w, snap, cfg)
    return w - cfg.step_size * grad, value
