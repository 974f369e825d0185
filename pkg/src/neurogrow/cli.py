"""``neurogrow`` command line.

Exit codes: 0 success, 2 configuration error, 3 data/checkpoint error,
4 runtime failure.
"""

import argparse
import csv
import itertools
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import analysis
from .config import apply_overrides, config_from_dict, config_to_dict, load_config
from .errors import ConfigError, DataError, NeurogrowError
from .growth import apply_growth, plan_growth
from .network import load_checkpoint, save_checkpoint
from .trainer import (evaluate, load_datasets, post_growth_regularize, resolve_reg_layers,
                      run_training, write_events_csv)

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME = 0, 2, 3, 4
FROZEN_CONFIG = "config.json"

log = logging.getLogger("neurogrow")


def write_frozen_config(cfg, out_dir):
    path = Path(out_dir) / FROZEN_CONFIG
    path.write_text(json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n")
    return path


def cmd_train(args):
    cfg = load_config(args.config, args.set)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_frozen_config(cfg, out)
    report = run_training(cfg, out)
    if report.failed:
        log.error("%s", report.error)
        return EXIT_RUNTIME
    last = report.rows[-1] if report.rows else None
    if last:
        print(f"epoch {last.epoch}: train_acc={last.train_acc:.4f} test_acc={last.test_acc:.4f} "
              f"params={report.net.param_count()}")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_eval(args):
    cfg = load_config(args.config, args.set)
    net = load_checkpoint(args.checkpoint)
    train, test = load_datasets(cfg.data, cfg.seed)
    print(f"train_acc={evaluate(net, train)!r}")
    print(f"test_acc={evaluate(net, test)!r}")
    return EXIT_OK


def cmd_grow(args):
    """Grow a checkpoint offline, then run the post-growth regularizer unless ``--no-reg``."""
    cfg = load_config(args.config, args.set) if args.config else config_from_dict({})
    net = load_checkpoint(args.checkpoint)
    plan = plan_growth(net, cfg.growth)
    net, record = apply_growth(net, plan, cfg.growth, np.random.default_rng(cfg.seed), seed=cfg.seed)
    if not args.no_reg:
        net, _ = post_growth_regularize(net, cfg.reg, resolve_reg_layers(cfg.reg_layers, net))
    save_checkpoint(net, args.out)
    if args.events:
        write_events_csv([record], args.events)
    noop = " (no-op plan)" if plan.is_noop else ""
    print(f"widths {record.widths_before} -> {record.widths_after}, params "
          f"{record.param_count_before} -> {record.param_count_after}{noop}")
    return EXIT_OK


def analyze_checkpoint(net, layers=None, bins=40, threshold=0.5):
    """Histograms and near-zero fractions for the given 0-based hidden layers (default: all eligible)."""
    if layers is None:
        layers = [i for i, layer in enumerate(net.layers) if layer.weights.shape[0] >= 2]
    hists = [analysis.similarity_histogram(net, i, bins) for i in layers]
    return [(h, analysis.near_zero_fraction(h, threshold)) for h in hists]


def cmd_analyze(args):
    net = load_checkpoint(args.checkpoint)
    layers = None
    if args.layer is not None:
        if not 1 <= args.layer <= len(net.all_layers()):
            raise ConfigError(f"--layer {args.layer} out of range (1..{len(net.all_layers())})")
        layers = [args.layer - 1]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results = analyze_checkpoint(net, layers, args.bins, args.threshold)
    with open(out / "near_zero.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["layer", "neurons", "pairs", "threshold", "near_zero_fraction"])
        for hist, frac in results:
            analysis.write_histogram_csv(hist, out / f"hist_l{hist.layer + 1}.csv")
            n = net.layer(hist.layer).weights.shape[0]
            w.writerow([hist.layer + 1, n, hist.total_pairs, repr(float(args.threshold)), repr(frac)])
            print(f"layer {hist.layer + 1}: {hist.total_pairs} pairs, near-zero fraction {frac:.4f}")
    return EXIT_OK


def load_sweep_spec(path):
    try:
        spec = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read sweep spec {path}: {exc}") from None
    unknown = set(spec) - {"grid", "seeds"}
    if unknown:
        raise ConfigError(f"unknown sweep key(s): {sorted(unknown)}")
    grid = spec.get("grid", {})
    if not isinstance(grid, dict) or any(not isinstance(v, list) or not v for v in grid.values()):
        raise ConfigError("sweep.grid must map dotted config keys to non-empty lists")
    seeds = spec.get("seeds", [0])
    if isinstance(seeds, int):
        seeds = list(range(seeds))
    if not seeds:
        raise ConfigError("sweep.seeds must be a positive count or a non-empty list")
    return grid, seeds


def _cell_name(assign, seed):
    parts = [f"{k}={json.dumps(v)}" for k, v in assign.items()] + [f"seed={seed}"]
    return ",".join(parts).replace("/", "_").replace(" ", "")


def _combo_sort_key(values):
    # smaller values first; N (reg.n_iters) is the usual swept key
    return tuple((0, v) if isinstance(v, (int, float)) else (1, json.dumps(v)) for v in values)


def run_sweep(base_raw, grid, seeds, out_dir):
    """Train every (grid combination, seed) cell; returns ``(cell_rows, comparison_rows)``."""
    out_dir = Path(out_dir)
    keys = list(grid)
    combos = list(itertools.product(*(grid[k] for k in keys)))
    # validate every cell's config before any training starts
    cells = []
    for values in combos:
        assign = dict(zip(keys, values))
        label = ",".join(f"{k}={json.dumps(v)}" for k, v in assign.items()) or "base"
        for seed in seeds:
            overrides = [f"{k}={json.dumps(v)}" for k, v in assign.items()]
            raw = apply_overrides(base_raw, overrides + [f"seed={seed}", f"label={json.dumps(label)}"])
            cells.append((values, assign, seed, label, config_from_dict(raw)))
    cell_rows, reports, report_labels = [], [], []
    for values, assign, seed, label, cfg in cells:
        cell_dir = out_dir / "cells" / _cell_name(assign, seed)
        cell_dir.mkdir(parents=True, exist_ok=True)
        write_frozen_config(cfg, cell_dir)
        row = {**assign, "seed": seed, "method": label, "dir": str(cell_dir)}
        try:
            report = run_training(cfg, cell_dir)
            if report.failed:
                raise RuntimeError(report.error)
        except Exception as exc:  # a failed cell is recorded and the sweep continues
            log.error("cell %s failed: %s", cell_dir.name, exc)
            row.update(status="failed", error=str(exc))
            cell_rows.append(row)
            continue
        row.update(status="ok", error="", final_test_acc=report.final_test_acc,
                   train_seconds=report.wall_seconds)
        cell_rows.append(row)
        reports.append(report)
        report_labels.append(label)
    comparison = analysis.compare_runs(reports, report_labels) if reports else []
    by_label = {label: values for values, _, _, label, _ in cells}
    for row in comparison:
        row.update(zip(keys, by_label[row["method"]]))
        row["best"] = False
    if comparison:
        best = min(comparison, key=lambda r: (-r["test_acc_mean"], _combo_sort_key(by_label[r["method"]])))
        best["best"] = True
    return cell_rows, comparison


def cmd_sweep(args):
    try:
        base_raw = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {args.config}: {exc}") from None
    base_raw = apply_overrides(base_raw, args.set)
    grid, seeds = load_sweep_spec(args.sweep)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cell_rows, comparison = run_sweep(base_raw, grid, seeds, out)
    keys = list(grid)
    with open(out / "cells.csv", "w", newline="") as f:
        fields = keys + ["seed", "method", "status", "final_test_acc", "train_seconds", "error", "dir"]
        w = csv.DictWriter(f, fieldnames=fields, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for row in cell_rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    analysis.write_comparison_csv(comparison, out / "comparison.csv", extra_fields=keys + ["best"])
    failed = sum(r["status"] == "failed" for r in cell_rows)
    print(f"{len(cell_rows)} cells ({failed} failed); comparison written to {out / 'comparison.csv'}")
    for row in comparison:
        flag = "  <- best" if row["best"] else ""
        print(f"  {row['method']}: {row['test_acc_mean']:.4f} +/- {row['test_acc_std']:.4f}{flag}")
    return EXIT_OK if not failed else EXIT_RUNTIME


def build_parser():
    p = argparse.ArgumentParser(prog="neurogrow", description="Train width-growing networks with a neuron-similarity regularizer.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="JSON training config")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config value (dotted key, JSON value); repeatable")

    sp = sub.add_parser("train", help="train a model")
    common(sp)
    sp.add_argument("--out", required=True, help="run directory")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a checkpoint on the configured dataset")
    common(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("grow", help="apply one growth event to a checkpoint")
    common(sp, config_required=False)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--out", required=True, help="path of the grown checkpoint")
    sp.add_argument("--events", help="optional growth-event CSV path")
    sp.add_argument("--no-reg", action="store_true", help="skip the post-growth regularizer")
    sp.set_defaults(func=cmd_grow)

    sp = sub.add_parser("analyze", help="similarity histograms for a checkpoint")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--layer", type=int, help="1-based layer number (default: every hidden layer)")
    sp.add_argument("--bins", type=int, default=40)
    sp.add_argument("--threshold", type=float, default=0.5)
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("sweep", help="grid x seeds sweep with a comparison table")
    common(sp)
    sp.add_argument("--sweep", required=True, help='JSON: {"grid": {"reg.n_iters": [1, 5]}, "seeds": 3}')
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_sweep)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NeurogrowError, OSError, ArithmeticError, ValueError, RuntimeError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
