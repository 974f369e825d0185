"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run ``pytest tests/test_acceptance.py -v -s`` to see the lines inline; they
are also repeated in the terminal summary.
"""

import csv
import itertools
import json
import math
import time

import numpy as np
import pytest

from neurogrow.analysis import near_zero_fraction, similarity_histogram
from neurogrow.cli import main
from neurogrow.config import config_from_dict
from neurogrow.growth import GrowthPolicy, apply_growth, grow_split, param_count_for_widths, plan_growth
from neurogrow.network import build_network, forward, neuron_matrix
from neurogrow.similarity import (LayerSnapshot, RegConfig, combined_reg_loss, reg_step,
                                  similarity_loss_grad, similarity_map, weight_change_penalty)
from neurogrow.trainer import run_training

from conftest import central_diff, rel_err
from test_network import _check_network_gradients

RESULTS = []


def record(number, title, ok, detail):
    line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {title} ({detail})"
    RESULTS.append(line)
    print(line)
    assert ok, line


def test_criterion_1_similarity_oracle():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        n, d = int(rng.integers(1, 65)), int(rng.integers(1, 129))
        w = rng.normal(size=(n, d)) * rng.uniform(0.01, 100)
        c = similarity_map(w)
        norms = [math.sqrt(float(row @ row)) for row in w]
        for i in range(n):
            for j in range(n):
                ref = float(w[i] @ w[j]) / (norms[i] * norms[j])
                worst = max(worst, abs(c[i, j] - ref))
    seconds = time.perf_counter() - t0
    record(1, "similarity map vs brute-force cosine loop", worst <= 1e-12 and seconds < 5,
           f"max abs diff {worst:.2e}, {seconds:.2f}s")


def _separated(rng, n, d, floor=1e-3):
    while True:
        w = rng.normal(size=(n, d))
        if np.abs(similarity_map(w)[~np.eye(n, dtype=bool)]).min() > floor:
            return w


def test_criterion_2_gradients():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    sim_err = pen_err = 0.0
    for _ in range(10):
        w = _separated(rng, int(rng.integers(3, 10)), int(rng.integers(2, 7)))
        _, g = similarity_loss_grad(w)
        sim_err = max(sim_err, rel_err(g, central_diff(lambda: similarity_loss_grad(w)[0], w, 1e-6)))
        snap = LayerSnapshot(w.sum() * rng.choice([0.5, 1.7, -2.0]))
        cfg = RegConfig()
        _, g = weight_change_penalty(w, snap, cfg)
        pen_err = max(pen_err, rel_err(g, central_diff(lambda: weight_change_penalty(w, snap, cfg)[0], w, 1e-6)))
    net_err = 0.0
    nets = [
        build_network((5,), [{"type": "dense", "width": 16}, {"type": "dense", "width": 32}], 3,
                      np.random.default_rng(1)),
        build_network((2, 6, 6), [{"type": "conv", "channels": 3, "kernel": 3, "pad": 1},
                                  {"type": "conv", "channels": 4, "kernel": 2, "stride": 2},
                                  {"type": "dense", "width": 5}], 3, np.random.default_rng(2)),
    ]
    for net in nets:
        x = rng.normal(size=(4, *net.input_shape))
        y = rng.integers(0, 3, 4)
        try:
            _check_network_gradients(net, x, y, h=1e-5, tol=1e-5)
        except AssertionError:
            net_err = float("inf")
    seconds = time.perf_counter() - t0
    ok = sim_err <= 1e-6 and pen_err <= 1e-6 and net_err <= 1e-5 and seconds < 30
    record(2, "analytic gradients vs central differences", ok,
           f"mu {sim_err:.1e}, penalty {pen_err:.1e}, network {'ok' if net_err == 0 else 'over 1e-5'}, "
           f"{seconds:.1f}s")


def test_criterion_3_function_preserving_split():
    worst = 0.0
    specs = [((4,), [{"type": "dense", "width": 16}, {"type": "dense", "width": 32}]),
             ((1, 8, 8), [{"type": "conv", "channels": 4, "kernel": 3},
                          {"type": "conv", "channels": 8, "kernel": 2, "stride": 2},
                          {"type": "dense", "width": 12}])]
    for seed, (shape, hidden) in itertools.product(range(3), specs):
        net = build_network(shape, hidden, 4, np.random.default_rng(seed))
        x = np.random.default_rng(100 + seed).normal(size=(100, *shape))
        before, _ = forward(net, x)
        for index, layer in enumerate(net.layers):
            k = max(1, layer.weights.shape[0] // 2)
            grow_split(net, index, k, np.random.default_rng(seed), epsilon=0.0)
        after, _ = forward(net, x)
        worst = max(worst, float(np.abs(after - before).max()))
    record(3, "split with epsilon 0 preserves outputs", worst <= 1e-9, f"max abs change {worst:.1e}")


def _budget_battery():
    for d, k in itertools.product((2, 64), (2, 10)):
        for w in range(8, 65):
            yield (d,), [{"type": "dense", "width": w}], k
        for a, b in itertools.product(range(8, 65, 4), repeat=2):
            yield (d,), [{"type": "dense", "width": a}, {"type": "dense", "width": b}], k
    for c1, c2 in itertools.product((8, 12, 16), (8, 16, 24)):
        yield (1, 8, 8), [{"type": "conv", "channels": c1, "kernel": 3, "pad": 1},
                          {"type": "conv", "channels": c2, "kernel": 2, "stride": 2},
                          {"type": "dense", "width": 16}], 10


def test_criterion_4_growth_budget():
    policy = GrowthPolicy(fraction=0.35, split_epsilon=0.0)
    total, misses, unreachable, recount_errors = 0, [], 0, 0
    for shape, hidden, k in _budget_battery():
        net = build_network(shape, hidden, k, np.random.default_rng(total))
        total += 1
        plan = plan_growth(net, policy)
        target = 1.35 * plan.param_count_before
        grown, _ = apply_growth(net, plan, policy, np.random.default_rng(0))
        recount = sum(p.size for p in grown.parameters())
        recount_errors += recount != plan.predicted_param_count
        if abs(recount / target - 1) > 0.02:
            misses.append((shape, plan.widths_before))
            # could any integer widths at all have hit the band?
            ranges = [range(w, 2 * w + 1) for w in plan.widths_before]
            unreachable += not any(abs(param_count_for_widths(net, list(v)) / target - 1) <= 0.02
                                   for v in itertools.product(*ranges))
    record(4, "growth budget within 2% of 1.35x", not misses and not recount_errors,
           f"{total - len(misses)}/{total} nets in band; {unreachable} of {len(misses)} misses have no "
           f"integer widths in band; recount mismatches {recount_errors}; first misses {misses[:4]}")


@pytest.fixture(scope="module")
def regularizer_runs():
    t0 = time.perf_counter()
    runs = {}
    for seed in range(5):
        for on in (True, False):
            cfg = config_from_dict({"seed": seed, "reg": {"enable_sim_loss": on, "enable_weight_penalty": on}})
            assert (cfg.epochs, cfg.grow_every_epochs, cfg.growth.operator, cfg.reg.n_iters, cfg.reg.lam) == \
                (100, 20, "hybrid", 15, 0.1)
            assert [h["width"] for h in cfg.hidden] == [16, 32]
            report = run_training(cfg)
            frac = near_zero_fraction(similarity_histogram(report.net, 1), 0.5)
            runs[seed, on] = (frac, report.final_test_acc)
    return runs, time.perf_counter() - t0


def test_criterion_5_regularizer_effect(regularizer_runs):
    runs, seconds = regularizer_runs
    wins = sum(runs[s, True][0] > runs[s, False][0] for s in range(5))
    diffs = ", ".join(f"{runs[s, True][0] - runs[s, False][0]:+.4f}" for s in range(5))
    record(5, "layer-2 near-zero fraction higher with regularizer in >= 4/5 seeds",
           wins >= 4 and seconds < 600, f"{wins}/5 seeds; differences {diffs}; {seconds:.1f}s")


def test_criterion_6_accuracy_non_regression(regularizer_runs):
    runs, _ = regularizer_runs
    with_reg = np.mean([runs[s, True][1] for s in range(5)])
    without = np.mean([runs[s, False][1] for s in range(5)])
    record(6, "mean test accuracy with regularizer >= baseline - 0.5pp", with_reg >= without - 0.005,
           f"{100 * with_reg:.2f}% vs {100 * without:.2f}%")


def test_criterion_7_ablation_harness(tmp_path):
    base = tmp_path / "base.json"
    base.write_text(json.dumps({"epochs": 40, "seed": 3}))
    sweep = tmp_path / "sweep.json"
    sweep.write_text(json.dumps({"grid": {"reg.enable_sim_loss": [False, True],
                                          "reg.enable_weight_penalty": [False, True]}, "seeds": [3]}))
    code = main(["sweep", "--config", str(base), "--sweep", str(sweep), "--out", str(tmp_path / "sw")])
    code_base = main(["train", "--config", str(base), "--set", "reg.enable_sim_loss=false",
                      "--set", "reg.enable_weight_penalty=false", "--out", str(tmp_path / "baseline")])
    with open(tmp_path / "sw/comparison.csv", newline="") as f:
        rows = list(csv.DictReader(f))
    flags = {(r["enable_sim_loss"], r["enable_weight_penalty"]) for r in rows}
    populated = len(rows) == 4 and len(flags) == 4 and all(r["test_acc_mean"] not in ("", "nan") for r in rows)
    off_cell = next((tmp_path / "sw/cells").glob("reg.enable_sim_loss=false,reg.enable_weight_penalty=false,*"))
    same = (off_cell / "metrics.csv").read_bytes() == (tmp_path / "baseline/metrics.csv").read_bytes()
    record(7, "flag-grid sweep gives four rows; both-off equals baseline byte-for-byte",
           code == 0 and code_base == 0 and populated and same,
           f"exit codes {code}/{code_base}, {len(rows)} rows, both-off identical: {same}")


def test_criterion_8_determinism(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"epochs": 40, "grow_every_epochs": 10, "seed": 11}))
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    frozen = tmp_path / "a/config.json"
    assert main(["train", "--config", str(frozen), "--out", str(tmp_path / "b")]) == 0
    assert main(["train", "--config", str(frozen), "--out", str(tmp_path / "c")]) == 0
    a, b, c = ((tmp_path / d / "metrics.csv").read_bytes() for d in "abc")
    record(8, "identical frozen configs give byte-identical metrics", a == b == c,
           f"{len(a.splitlines())} lines compared")


def test_criterion_9_post_growth_monotonicity():
    cfg = RegConfig(n_iters=30, step_size=1e-3)
    worst, bad_layers = -math.inf, 0
    for seed in range(10):
        net = build_network((6,), [{"type": "dense", "width": 16}, {"type": "dense", "width": 32}], 3,
                            np.random.default_rng(seed))
        policy = GrowthPolicy(operator="hybrid")
        net, _ = apply_growth(net, plan_growth(net, policy), policy, np.random.default_rng([seed, 1]))
        index = seed % 2
        w = neuron_matrix(net.layers[index]).copy()
        snap = net.snapshots[index]
        losses = []
        for _ in range(cfg.n_iters):
            w, loss = reg_step(w, snap, cfg)
            losses.append(loss)
        losses.append(combined_reg_loss(w, snap, cfg)[0])
        rise = float(np.max(np.diff(losses)))
        worst = max(worst, rise)
        bad_layers += rise > 1e-12
    record(9, "combined loss non-increasing over 30 post-growth steps", bad_layers == 0,
           f"{bad_layers}/10 layers rise; largest single-step increase {worst:.2e}")
