"""Training loop with scheduled growth and post-growth similarity regularization.

Per epoch: one pass of SGD over shuffled batches, then a metrics row. When
the epoch number is a multiple of ``grow_every_epochs`` the network grows
*after* the row is recorded (so a row always describes one architecture),
the optimizer state is padded, and ``reg.n_iters`` regularizer iterations
run on the selected layers.
"""

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import data as data_mod
from .config import TrainConfig
from .errors import ConfigError
from .growth import apply_growth, plan_growth
from .network import (backward, build_network, forward, neuron_matrix, save_checkpoint,
                      softmax_cross_entropy)
from .optimizer import SgdState, lr_at, resize_state, sgd_step
from .similarity import mean_offdiag_abs, reg_terms, similarity_map

log = logging.getLogger(__name__)

METRICS_FILE = "metrics.csv"
EVENTS_FILE = "growth_events.csv"
TRACE_FILE = "reg_trace.csv"
CHECKPOINT_FILE = "final.ckpt"


@dataclass
class EpochRow:
    epoch: int
    train_loss: float
    train_acc: float
    test_acc: float
    param_count: int
    lr: float
    mu_sim: list


@dataclass
class RunReport:
    config: TrainConfig
    rows: list = field(default_factory=list)
    events: list = field(default_factory=list)
    trace: list = field(default_factory=list)
    wall_seconds: float = 0.0
    checkpoint_path: str = None
    failed: bool = False
    error: str = None
    net: object = None

    @property
    def final_test_acc(self):
        return self.rows[-1].test_acc if self.rows else float("nan")


def load_datasets(dcfg, seed):
    """Return ``(train, test)`` for a data config; test reuses the training statistics."""
    if dcfg.kind == "spirals":
        dseed = seed if dcfg.seed is None else dcfg.seed
        full = data_mod.make_two_spirals(dcfg.n_per_class, dcfg.noise_std, dseed, dcfg.turns)
        train, test = data_mod.train_test_split(full, dcfg.test_fraction, dseed + 1)
    elif dcfg.kind == "csv":
        train = data_mod.load_csv(dcfg.train_path, dcfg.label_column)
        return train, data_mod.load_csv(dcfg.test_path, dcfg.label_column,
                                        stats=(train.mean, train.std), label_ids=train.label_ids)
    else:
        train = data_mod.load_idx(dcfg.train_images, dcfg.train_labels, limit=dcfg.limit)
        test = data_mod.load_idx(dcfg.test_images, dcfg.test_labels, limit=dcfg.limit)
        k = max(train.class_count, test.class_count)
        train.class_count = test.class_count = k
        return train, test
    if dcfg.normalize:
        train = data_mod.standardize(train)
        test = data_mod.standardize(test, (train.mean, train.std))
    return train, test


def resolve_reg_layers(selector, net):
    """Map a selector ("hidden", "all" or 1-based numbers) to 0-based layer indices."""
    n_all = len(net.all_layers())
    if selector == "hidden":
        return list(range(len(net.layers)))
    if selector == "all":
        return list(range(n_all))
    indices = [i - 1 for i in selector]
    bad = [i + 1 for i in indices if not 0 <= i < n_all]
    if bad:
        raise ConfigError(f"reg_layers {bad} out of range for a network with {n_all} layers")
    return indices


def evaluate(net, ds, batch_size=1024):
    """Argmax accuracy; ties resolve to the lowest class index."""
    correct = 0
    for start in range(0, len(ds), batch_size):
        logits, _ = forward(net, ds.inputs[start:start + batch_size])
        correct += int(np.sum(np.argmax(logits, axis=1) == ds.labels[start:start + batch_size]))
    return correct / len(ds)


def layer_mu(net):
    return [mean_offdiag_abs(similarity_map(neuron_matrix(layer))) for layer in net.layers]


def post_growth_regularize(net, reg, layers, task_batches=None):
    """Run ``reg.n_iters`` descent steps on the regularizer of each selected layer.

    With ``reg.with_task_loss`` and a ``task_batches`` iterator, each
    iteration also follows the task-loss gradient of one batch. Returns the
    per-iteration, per-layer trace.
    """
    trace = []
    use_task = reg.with_task_loss and task_batches is not None
    for it in range(reg.n_iters):
        task_grads = None
        if use_task:
            x, y = next(task_batches)
            logits, cache = forward(net, x)
            _, g = softmax_cross_entropy(logits, y)
            task_grads = backward(net, cache, g)
        updates = {}
        for li in layers:
            layer = net.layer(li)
            terms = reg_terms(neuron_matrix(layer), net.snapshots.get(li), reg)
            trace.append({"iteration": it, "layer": li, "mu_sim": terms.mu,
                          "penalty": terms.penalty, "value": terms.value})
            updates[li] = terms.grad.reshape(layer.weights.shape)
        for li, grad in updates.items():
            layer = net.layer(li)
            layer.weights = layer.weights - reg.step_size * grad
        if task_grads is not None:
            for p, g in zip(net.parameters(), task_grads):
                p -= reg.step_size * g
        net.touch()
    return net, trace


def _cycle_batches(ds, batch_size, seed):
    epoch = 0
    while True:
        yield from data_mod.batches(ds, batch_size, [seed, 0xB, epoch])
        epoch += 1


class _Schedule:
    """Global cosine schedule, or one restarted at every growth boundary."""

    def __init__(self, state, steps_per_epoch, cfg):
        self.state = state
        self.steps_per_epoch = steps_per_epoch
        self.restart = cfg.optim.restart_on_growth and cfg.growth_enabled
        self.every = cfg.grow_every_epochs
        self.epochs = cfg.epochs

    def lr(self, step):
        if not self.restart:
            return lr_at(step, self.state)
        seg_len = self.every * self.steps_per_epoch
        seg = step // seg_len
        seg_start_epoch = seg * self.every
        length = min(self.every, self.epochs - seg_start_epoch) * self.steps_per_epoch
        local = SgdState(self.state.base_lr, self.state.momentum, max(length, 1))
        return lr_at(step - seg * seg_len, local)


def run_training(cfg, out_dir=None):
    """Train according to ``cfg``; writes metrics/events/trace CSVs and a checkpoint into ``out_dir``."""
    t0 = time.perf_counter()
    train, test = load_datasets(cfg.data, cfg.seed)
    net = build_network(train.input_shape, cfg.hidden, train.class_count, np.random.default_rng(cfg.seed))
    reg_layers = resolve_reg_layers(cfg.reg_layers, net)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
    report = RunReport(cfg)

    steps_per_epoch = math.ceil(len(train) / cfg.batch_size)
    state = SgdState(cfg.optim.lr, cfg.optim.momentum, max(cfg.epochs * steps_per_epoch, 1))
    schedule = _Schedule(state, steps_per_epoch, cfg)
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        loss_sum = 0.0
        for x, y in data_mod.batches(train, cfg.batch_size, [cfg.seed, epoch]):
            logits, cache = forward(net, x)
            loss, g = softmax_cross_entropy(logits, y)
            loss_sum += loss * len(y)
            sgd_step(net.parameters(), backward(net, cache, g), state, step, lr=schedule.lr(step))
            net.touch()
            step += 1
        report.rows.append(EpochRow(
            epoch=epoch,
            train_loss=loss_sum / len(train),
            train_acc=evaluate(net, train),
            test_acc=evaluate(net, test),
            param_count=net.param_count(),
            lr=schedule.lr(step),
            mu_sim=layer_mu(net),
        ))
        if cfg.growth_enabled and epoch % cfg.grow_every_epochs == 0:
            growth_seed = [cfg.seed, epoch, 0x6]
            plan = plan_growth(net, cfg.growth)
            net, record = apply_growth(net, plan, cfg.growth, np.random.default_rng(growth_seed),
                                       seed=":".join(map(str, growth_seed)), epoch=epoch)
            report.events.append(record)
            resize_state(state, net)
            tasks = _cycle_batches(train, cfg.batch_size, cfg.seed) if cfg.reg.with_task_loss else None
            net, trace = post_growth_regularize(net, cfg.reg, reg_layers, tasks)
            report.trace.extend(dict(row, epoch=epoch) for row in trace)
            log.info("epoch %d: grew %s -> %s", epoch, record.widths_before, record.widths_after)

    report.wall_seconds = time.perf_counter() - t0
    report.net = net
    if out_dir is not None:
        write_metrics_csv(report, out_dir / METRICS_FILE, len(net.layers))
        write_events_csv(report.events, out_dir / EVENTS_FILE)
        write_trace_csv(report.trace, out_dir / TRACE_FILE)
        path = out_dir / CHECKPOINT_FILE
        try:
            save_checkpoint(net, path)
            report.checkpoint_path = str(path)
        except OSError as exc:
            report.failed = True
            report.error = f"checkpoint write failed: {exc}"
    return report


def _fmt(x):
    return repr(float(x))


def write_metrics_csv(report, path, n_hidden):
    header = ["epoch", "train_loss", "train_acc", "test_acc", "param_count", "lr"]
    header += [f"mu_sim_l{i + 1}" for i in range(n_hidden)]
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for r in report.rows:
            w.writerow([r.epoch, _fmt(r.train_loss), _fmt(r.train_acc), _fmt(r.test_acc),
                        r.param_count, _fmt(r.lr), *map(_fmt, r.mu_sim)])


def write_events_csv(events, path):
    header = ["epoch", "operator", "seed", "widths_before", "widths_after", "param_count_before",
              "param_count_after", "predicted_param_count", "neurons_added"]
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for e in events:
            w.writerow([e.epoch, e.operator, e.seed, ";".join(map(str, e.widths_before)),
                        ";".join(map(str, e.widths_after)), e.param_count_before,
                        e.param_count_after, e.predicted_param_count, e.neurons_added])


def write_trace_csv(trace, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["epoch", "iteration", "layer", "mu_sim", "penalty", "value"])
        for t in trace:
            w.writerow([t["epoch"], t["iteration"], t["layer"] + 1, _fmt(t["mu_sim"]),
                        _fmt(t["penalty"]), _fmt(t["value"])])
