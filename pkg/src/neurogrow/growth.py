"""Width growth: random addition, splitting, hybrid, and parameter-budget planning.

All operators append new neurons at the end of the target layer and new
input slices at the end of its successor, and leave every other layer alone.
"""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, UsageError
from .network import Conv2dLayer, neuron_matrix
from .similarity import LayerSnapshot

OPERATORS = ("random", "split", "hybrid")


@dataclass
class GrowthPolicy:
    operator: str = "hybrid"
    fraction: float = 0.35
    split_epsilon: float = 1e-2
    random_init_std: float = 1.0
    hybrid_split_share: float = 0.5

    def __post_init__(self):
        if self.operator not in OPERATORS:
            raise ConfigError(f"growth.operator must be one of {OPERATORS}, got {self.operator!r}")
        if not self.fraction > 0:
            raise ConfigError(f"growth.fraction must be > 0, got {self.fraction}")
        if self.split_epsilon < 0:
            raise ConfigError(f"growth.split_epsilon must be >= 0, got {self.split_epsilon}")
        if not self.random_init_std >= 0:
            raise ConfigError(f"growth.random_init_std must be >= 0, got {self.random_init_std}")
        if not 0 <= self.hybrid_split_share <= 1:
            raise ConfigError(f"growth.hybrid_split_share must lie in [0, 1], got {self.hybrid_split_share}")


@dataclass
class GrowthPlan:
    widths_before: list
    neurons_to_add: list
    param_count_before: int
    predicted_param_count: int
    factor: float

    @property
    def is_noop(self):
        return not any(self.neurons_to_add)

    @property
    def widths_after(self):
        return [w + k for w, k in zip(self.widths_before, self.neurons_to_add)]


@dataclass
class GrowthEventRecord:
    operator: str
    widths_before: list
    widths_after: list
    param_count_before: int
    param_count_after: int
    predicted_param_count: int
    neurons_added: int
    seed: object = None
    epoch: int = None
    snapshots: dict = field(default_factory=dict)


def _round_half_up(x):
    return int(math.floor(x + 0.5))


def param_count_for_widths(net, widths):
    """Parameter count ``net`` would have with the given hidden widths."""
    if len(widths) != len(net.layers):
        raise UsageError(f"expected {len(net.layers)} widths, got {len(widths)}")
    total = 0
    shape = net.input_shape
    for layer, (_, out_shape), w in zip(net.layers, net.shapes(), widths):
        if isinstance(layer, Conv2dLayer):
            kh, kw = layer.kernel
            total += shape[0] * kh * kw * w + w
            shape = (w, *out_shape[1:])
        else:
            total += int(np.prod(shape)) * w + w
            shape = (w,)
    k = net.num_classes
    return total + int(np.prod(shape)) * k + k


def _rounding_options(widths, r):
    """Every width vector whose entries are floor or ceil of ``w * r`` (never below ``w``)."""
    choices = [sorted({max(w, math.floor(w * r)), max(w, math.ceil(w * r))}) for w in widths]
    if len(widths) > MAX_ROUNDING_LAYERS:
        # too many layers for the full product: plain rounding plus the two extremes
        return [[c[0] for c in choices], [c[-1] for c in choices],
                [max(w, _round_half_up(w * r)) for w in widths]]
    return [list(v) for v in itertools.product(*choices)]


MAX_ROUNDING_LAYERS = 10


def plan_growth(net, policy):
    """Choose hidden widths so the parameter count lands closest to (1 + fraction) x its current value.

    All layers share one multiplicative factor r >= 1; each layer may round
    ``w * r`` down or up (never below ``w``). Only factors between the point
    where all-ceil first reaches the target and the point where all-floor
    passes it can hold the best vector, so bisection finds that window and
    every rounding breakpoint inside it is examined. Ties prefer the larger
    count, then the lexicographically smaller width vector.
    """
    if not net.layers:
        raise ConfigError("network has no growable hidden layer")
    widths = net.widths()
    base = net.param_count()
    target = (1.0 + policy.fraction) * base

    def count(ws):
        return param_count_for_widths(net, ws)

    def crossing(round_fn):
        # smallest r (to bisection precision) where the rounded widths reach the target
        def reaches(r):
            return count([max(w, round_fn(w * r)) for w in widths]) >= target
        lo, hi = 1.0, 2.0
        while not reaches(hi):
            lo, hi = hi, hi * 2.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid in (lo, hi):
                break
            if reaches(mid):
                hi = mid
            else:
                lo = mid
        return lo, hi

    r_start = crossing(math.ceil)[0]
    r_stop = crossing(math.floor)[1]
    # breakpoints where some w * r crosses an integer; probe each and the gaps between them
    points = {r_start, r_stop}
    for w in widths:
        points.update(m / w for m in range(math.floor(w * r_start), math.ceil(w * r_stop) + 1)
                      if r_start <= m / w <= r_stop)
    points = sorted(points)
    probes = points + [0.5 * (a + b) for a, b in zip(points, points[1:])]

    best = None
    for r in probes:
        for ws in _rounding_options(widths, r):
            c = count(ws)
            key = (abs(c - target), -c, ws)
            if best is None or key < best[0]:
                best = (key, ws, c, r)
    _, new_widths, predicted, r = best
    return GrowthPlan(
        widths_before=widths,
        neurons_to_add=[n - w for n, w in zip(new_widths, widths)],
        param_count_before=base,
        predicted_param_count=predicted,
        factor=r,
    )


def _successor_slices(net, index, c_prev):
    """Successor weights viewed as (out, c_prev, block) plus a function restoring the layer's layout."""
    succ = net.layer(index + 1)
    out = succ.weights.shape[0]
    if isinstance(succ, Conv2dLayer):
        kh, kw = succ.kernel
        w3 = succ.weights.reshape(out, c_prev, kh * kw)
        return succ, w3, lambda a: a.reshape(out, a.shape[1], kh, kw)
    block = succ.in_features // c_prev
    w3 = succ.weights.reshape(out, c_prev, block)
    return succ, w3, lambda a: a.reshape(out, -1)


def _append_rows(layer, rows, biases):
    rows = np.asarray(rows).reshape(len(rows), *layer.weights.shape[1:])
    layer.weights = np.ascontiguousarray(np.concatenate([layer.weights, rows], axis=0))
    layer.bias = np.ascontiguousarray(np.concatenate([layer.bias, biases]))


def _check_index(net, index):
    if not 0 <= index < len(net.layers):
        raise UsageError(f"layer {index} is not a growable hidden layer (network has {len(net.layers)})")


def grow_random(net, index, k, rng, init_std=1.0):
    """Append ``k`` He-scaled Gaussian neurons to hidden layer ``index``; not function-preserving."""
    _check_index(net, index)
    if k < 1:
        raise UsageError(f"grow_random needs k >= 1, got {k}")
    layer = net.layers[index]
    c_prev, fan_in = neuron_matrix(layer).shape
    rows = rng.normal(0.0, init_std * math.sqrt(2.0 / fan_in), size=(k, fan_in))
    _append_rows(layer, rows, np.zeros(k))
    succ, w3, restore = _successor_slices(net, index, c_prev)
    out, c_prev, block = w3.shape
    succ_fan_in = (c_prev + k) * block
    new = rng.normal(0.0, init_std * math.sqrt(2.0 / succ_fan_in), size=(out, k, block))
    succ.weights = np.ascontiguousarray(restore(np.concatenate([w3, new], axis=1)))
    net.touch()
    return net


def select_split_parents(w, k):
    """Indices of the ``k`` rows with the largest L2 norm, lower index first on ties, in ascending order."""
    norms = np.sqrt(np.einsum("ij,ij->i", w, w))
    ranked = sorted(range(len(norms)), key=lambda i: (-norms[i], i))
    return sorted(ranked[:k])


def grow_split(net, index, k, rng, epsilon=0.0, selector=select_split_parents):
    """Duplicate ``k`` neurons of hidden layer ``index``.

    Each parent's incoming row becomes ``row - eps*g`` and the copy
    ``row + eps*g`` for a random unit direction ``g``; the parent's outgoing
    weights are halved and shared with the copy. At ``epsilon == 0`` the
    network function is unchanged.
    """
    _check_index(net, index)
    layer = net.layers[index]
    n = layer.weights.shape[0]
    if not 1 <= k <= n:
        raise UsageError(f"grow_split needs 1 <= k <= {n} (current width), got {k}")
    w = neuron_matrix(layer).copy()
    parents = selector(w, k)
    g = rng.normal(size=(k, w.shape[1]))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    copies = w[parents] + epsilon * g
    w[parents] -= epsilon * g
    layer.weights = np.ascontiguousarray(w.reshape(layer.weights.shape))
    _append_rows(layer, copies, layer.bias[parents].copy())
    succ, w3, restore = _successor_slices(net, index, n)
    w3 = w3.copy()
    w3[:, parents, :] *= 0.5
    w3 = np.concatenate([w3, w3[:, parents, :]], axis=1)
    succ.weights = np.ascontiguousarray(restore(w3))
    net.touch()
    return net


def grow_hybrid(net, index, k, rng, split_share=0.5, epsilon=0.0, init_std=1.0):
    """Split ``round(k * split_share)`` neurons, then add the rest at random."""
    if k < 1:
        raise UsageError(f"grow_hybrid needs k >= 1, got {k}")
    n_split = _round_half_up(k * split_share)
    if n_split:
        grow_split(net, index, n_split, rng, epsilon)
    if k - n_split:
        grow_random(net, index, k - n_split, rng, init_std)
    return net


def grow_layer(net, index, k, rng, policy):
    if policy.operator == "random":
        return grow_random(net, index, k, rng, policy.random_init_std)
    if policy.operator == "split":
        return grow_split(net, index, k, rng, policy.split_epsilon)
    return grow_hybrid(net, index, k, rng, policy.hybrid_split_share, policy.split_epsilon,
                       policy.random_init_std)


def refresh_snapshots(net):
    net.snapshots = {i: LayerSnapshot.capture(layer.weights) for i, layer in enumerate(net.all_layers())}


def apply_growth(net, plan, policy, rng, seed=None, epoch=None):
    """Execute ``plan`` in layer order and refresh every layer's weight-sum snapshot."""
    if net.widths() != plan.widths_before or net.param_count() != plan.param_count_before:
        raise UsageError(
            f"stale growth plan: planned for widths {plan.widths_before}, network has {net.widths()}"
        )
    for index, k in enumerate(plan.neurons_to_add):
        if k:
            grow_layer(net, index, k, rng, policy)
    refresh_snapshots(net)
    record = GrowthEventRecord(
        operator=policy.operator,
        widths_before=list(plan.widths_before),
        widths_after=net.widths(),
        param_count_before=plan.param_count_before,
        param_count_after=net.param_count(),
        predicted_param_count=plan.predicted_param_count,
        neurons_added=sum(plan.neurons_to_add),
        seed=seed,
        epoch=epoch,
        snapshots={i: s.weight_sum_previous for i, s in net.snapshots.items()},
    )
    return net, record
