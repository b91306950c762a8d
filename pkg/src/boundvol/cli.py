"""Config-driven experiment runner.

Commands: train, measure, sweep, dropout-sweep, verify, plot.  Each run
is described by a JSON config (CLI flags override matching fields); the
effective config is copied into the output directory and every result
row carries its full parameter provenance.  Outputs are bit-stable for a
fixed config and seed.
"""

import argparse
import csv
import hashlib
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import attack as atk
from . import data as D
from . import geometry as geo
from . import network as nn
from . import volume as vol
from .layers import LayerSpec
from .plotting import PlotSpec, emit_plot
from .training import DropoutConfig, TrainConfig, train

RESULT_COLUMNS = [
    "run_id", "measure", "epsilon", "delta", "alpha", "trials", "successes",
    "p_hat", "clt_halfwidth_95", "zero_grad_count", "seed", "model_hash",
]

ARCH_PRESETS = {
    # single hidden layer of 100 units (MNIST / Fashion MNIST scale)
    "mnist_fc": {
        "input_shape": [784],
        "layers": [
            {"kind": "dense", "in_units": 784, "out_units": 100, "activation": "relu"},
            {"kind": "dense", "in_units": 100, "out_units": 10, "activation": "softmax"},
        ],
    },
    # three hidden layers of 1024 units (CIFAR-10 scale)
    "cifar10_fc": {
        "input_shape": [3072],
        "layers": [
            {"kind": "dense", "in_units": 3072, "out_units": 1024, "activation": "relu"},
            {"kind": "dense", "in_units": 1024, "out_units": 1024, "activation": "relu"},
            {"kind": "dense", "in_units": 1024, "out_units": 1024, "activation": "relu"},
            {"kind": "dense", "in_units": 1024, "out_units": 10, "activation": "softmax"},
        ],
    },
    "mnist_conv": {
        "input_shape": [28, 28, 1],
        "layers": [
            {"kind": "conv2d", "in_channels": 1, "out_channels": 16, "kernel_size": 5,
             "stride": 1, "padding": "same", "activation": "relu"},
            {"kind": "maxpool2d", "pool_size": 2, "stride": 2},
            {"kind": "conv2d", "in_channels": 16, "out_channels": 32, "kernel_size": 5,
             "stride": 1, "padding": "same", "activation": "relu"},
            {"kind": "maxpool2d", "pool_size": 2, "stride": 2},
            {"kind": "flatten"},
            {"kind": "dense", "in_units": 1568, "out_units": 100, "activation": "relu"},
            {"kind": "dense", "in_units": 100, "out_units": 10, "activation": "softmax"},
        ],
    },
    "cifar10_conv": {
        "input_shape": [32, 32, 3],
        "layers": [
            {"kind": "conv2d", "in_channels": 3, "out_channels": 16, "kernel_size": 3,
             "stride": 1, "padding": "same", "activation": "relu"},
            {"kind": "maxpool2d", "pool_size": 2, "stride": 2},
            {"kind": "conv2d", "in_channels": 16, "out_channels": 32, "kernel_size": 3,
             "stride": 1, "padding": "same", "activation": "relu"},
            {"kind": "maxpool2d", "pool_size": 2, "stride": 2},
            {"kind": "conv2d", "in_channels": 32, "out_channels": 64, "kernel_size": 3,
             "stride": 1, "padding": "same", "activation": "relu"},
            {"kind": "maxpool2d", "pool_size": 2, "stride": 2},
            {"kind": "flatten"},
            {"kind": "dense", "in_units": 1024, "out_units": 256, "activation": "relu"},
            {"kind": "dense", "in_units": 256, "out_units": 10, "activation": "softmax"},
        ],
    },
}
ARCH_PRESETS["fashion_fc"] = ARCH_PRESETS["mnist_fc"]
ARCH_PRESETS["fashion_conv"] = ARCH_PRESETS["mnist_conv"]


class CliError(Exception):
    pass


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path, fieldnames, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fieldnames)
        for row in rows:
            writer.writerow([_fmt(row.get(c)) for c in fieldnames])


def model_hash(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()[:16]


def load_config(args) -> dict:
    config = {}
    if args.config:
        with open(args.config) as fh:
            config = json.load(fh)
    for key in ("seed", "out", "model", "data", "threads"):
        value = getattr(args, key, None)
        if value is not None:
            config[key] = value
    config.setdefault("seed", 0)
    config.setdefault("threads", 1)
    return config


def _outdir(config) -> Path:
    out = Path(config.get("out", "."))
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "config.json", "w") as fh:
        json.dump(config, fh, indent=2, sort_keys=True)
    return out


def _load_dataset(config) -> D.Dataset:
    spec = config.get("dataset")
    if spec is None:
        raise CliError("config has no 'dataset' section")
    data_dir = Path(config.get("data", "."))
    kind = spec.get("kind")
    if kind == "idx":
        ds = D.load_idx(data_dir / spec["images"], data_dir / spec["labels"],
                        name=spec.get("name", "idx"))
    elif kind == "cifar10":
        ds = D.load_cifar10([data_dir / b for b in spec["batches"]])
    elif kind in ("blobs", "annulus"):
        ds = D.make_synthetic(
            kind, spec.get("m_per_class", 500), seed=spec.get("seed", config["seed"]),
            dim=spec.get("dim", 2), separation=spec.get("separation", 0.5),
            radius=spec.get("radius", 0.25), std=spec.get("std", 0.05),
        )
    else:
        raise CliError(f"unknown dataset kind {kind!r}")
    subset = spec.get("subset")
    if subset is not None and subset < len(ds):
        ds, _ = D.subset_split(ds, subset, 0, seed=spec.get("seed", config["seed"]))
    return ds


def _build_from_arch(config):
    arch = config.get("arch")
    if arch is None:
        raise CliError("config has no 'arch' section")
    if isinstance(arch, str):
        if arch not in ARCH_PRESETS:
            raise CliError(f"unknown architecture preset {arch!r}")
        arch = ARCH_PRESETS[arch]
    specs = [LayerSpec(**d) for d in arch["layers"]]
    return nn.build_network(specs, config.get("precision", "single"),
                            tuple(arch["input_shape"]))


# --- commands ---

def cmd_train(config) -> int:
    out = _outdir(config)
    dataset = _load_dataset(config)
    net = _build_from_arch(config)
    net = nn.init_he_normal(net, config["seed"])
    tc = TrainConfig(
        optimizer=config.get("optimizer", "sgd"),
        learning_rate=config.get("learning_rate", 0.01),
        batch_size=config.get("batch_size", 32),
        epochs=config.get("epochs", 10),
        seed=config["seed"],
    )
    dc = None
    if config.get("dropout"):
        d = config["dropout"]
        dc = DropoutConfig(rate=d.get("rate", 0.0), mode=d.get("mode", "weight_mask"),
                           rescale=d.get("rescale", False))
    net, history = train(net, dataset, tc, dc)
    nn.checkpoint_save(net, out / "checkpoint.json")
    write_csv(out / "history.csv", ["epoch", "loss", "accuracy"], history)
    return 0


def _measure_once(net, dataset, m, seed, threads):
    measure = m["measure"]
    common = dict(trials=m.get("trials", 100_000), seed=seed, workers=threads)
    if measure == "bvol":
        return vol.run_bvol(net, net.n_inputs, m["epsilon"], **common)
    if measure == "train_bvol":
        return vol.run_train_bvol(net, dataset, m["epsilon"], m["delta"],
                                  subset=m.get("subset", 10_000), **common)
    if measure == "ladv_bvol":
        return vol.run_ladv_bvol(net, dataset, m["epsilon"], m["delta"],
                                 alpha=m.get("alpha", 10),
                                 boundary_points=m.get("boundary_points", 10_000),
                                 **common)
    raise CliError(f"unknown measure {measure!r}")


def _estimate_row(i, est, mhash, seed):
    return {
        "run_id": f"{i:04d}",
        "measure": est.measure,
        "epsilon": est.epsilon,
        "delta": est.delta,
        "alpha": est.alpha,
        "trials": est.trials,
        "successes": est.successes,
        "p_hat": est.estimate,
        "clt_halfwidth_95": est.clt_halfwidth,
        "zero_grad_count": est.zero_grad_count,
        "seed": seed,
        "model_hash": mhash,
    }


def cmd_measure(config) -> int:
    out = _outdir(config)
    model_path = config.get("model")
    if not model_path:
        raise CliError("measure needs a --model checkpoint path")
    net = nn.checkpoint_load(model_path)
    mhash = model_hash(model_path)
    dataset = None
    if any(m["measure"] != "bvol" for m in config["measures"]):
        dataset = _load_dataset(config)
    rows = []
    for i, m in enumerate(config["measures"]):
        est = _measure_once(net, dataset, m, config["seed"], config["threads"])
        rows.append(_estimate_row(i, est, mhash, config["seed"]))
    write_csv(out / "results.csv", RESULT_COLUMNS, rows)
    return 0


def cmd_sweep(config) -> int:
    out = _outdir(config)
    model_path = config.get("model")
    if not model_path:
        raise CliError("sweep needs a --model checkpoint path")
    net = nn.checkpoint_load(model_path)
    mhash = model_hash(model_path)
    measure = config.get("measure", "bvol")
    epsilons = config["epsilons"]
    trials = config.get("trials", 100_000)
    seed = config["seed"]

    if measure == "bvol":
        region = vol.unit_cube(net.n_inputs)
        delta = alpha = None
    else:
        dataset = _load_dataset(config)
        delta = config["delta"]
        if measure == "train_bvol":
            centers = dataset.points
            subset = config.get("subset", 10_000)
            if subset < len(centers):
                rng = np.random.Generator(np.random.Philox(key=seed ^ 0x7B))
                centers = centers[np.sort(rng.choice(len(centers), subset, replace=False))]
            alpha = None
        elif measure == "ladv_bvol":
            alpha = config.get("alpha", 10)
            centers = vol._boundary_centers(net, dataset, alpha,
                                            config.get("boundary_points", 10_000), seed)
        else:
            raise CliError(f"unknown measure {measure!r}")
        region = vol.ball_union(centers, delta)

    estimates = vol.epsilon_sweep(net, region, epsilons, trials, seed,
                                  config["threads"])
    rows = []
    for i, est in enumerate(estimates):
        est.measure = measure
        est.alpha = alpha
        row = _estimate_row(i, est, mhash, seed)
        rows.append(row)
    write_csv(out / "results.csv", RESULT_COLUMNS, rows)
    return 0


def cmd_dropout_sweep(config) -> int:
    out = _outdir(config)
    dataset = _load_dataset(config)
    m_test = config.get("test_size", max(1, len(dataset) // 5))
    m_train = len(dataset) - m_test
    train_set, test_set = D.subset_split(dataset, m_train, m_test, config["seed"])
    test_labels = np.argmax(test_set.labels, axis=-1)

    rates = config.get("rates", [0.0, 0.25, 0.5])
    seeds = config.get("seeds", [0, 1, 2])
    base_epochs = config.get("epochs", 10)
    epochs_per_rate = config.get("epochs_per_0.1_dropout", 0)
    mv = config.get("volume", {})
    trials = mv.get("trials", 10_000)

    rows = []
    for rate in rates:
        cells = {"test_accuracy": [], "train_bvol": [], "ladv_bvol": []}
        failures = 0
        epochs = base_epochs + int(round(epochs_per_rate * rate / 0.1))
        for seed in seeds:
            try:
                net = nn.init_he_normal(_build_from_arch(config), seed)
                tc = TrainConfig(
                    optimizer=config.get("optimizer", "adam"),
                    learning_rate=config.get("learning_rate", 1e-4),
                    batch_size=config.get("batch_size", 32),
                    epochs=epochs, seed=seed,
                )
                dc = DropoutConfig(rate=rate) if rate > 0 else None
                net, _ = train(net, train_set, tc, dc)
                from .training import accuracy

                cells["test_accuracy"].append(accuracy(net, test_set.points, test_labels))
                tb = vol.run_train_bvol(
                    net, train_set, mv.get("train_epsilon", 0.003),
                    mv.get("delta", 0.2), trials=trials,
                    subset=mv.get("subset", 10_000), seed=seed,
                    workers=config["threads"])
                cells["train_bvol"].append(tb.estimate)
                lb = vol.run_ladv_bvol(
                    net, train_set, mv.get("ladv_epsilon", 0.001),
                    mv.get("delta", 0.2), alpha=mv.get("alpha", 10),
                    boundary_points=mv.get("boundary_points", 1_000),
                    trials=trials, seed=seed, workers=config["threads"])
                cells["ladv_bvol"].append(lb.estimate)
            except Exception as exc:  # per-cell failure; sweep continues
                failures += 1
                print(f"dropout-sweep cell (rate={rate}, seed={seed}) failed: {exc}",
                      file=sys.stderr)
        row = {"rate": rate, "n_seeds": len(seeds) - failures, "failures": failures}
        for name, values in cells.items():
            row[f"{name}_mean"] = float(np.mean(values)) if values else None
            row[f"{name}_std"] = float(np.std(values)) if values else None
        rows.append(row)
    write_csv(out / "dropout_sweep.csv",
              ["rate", "n_seeds", "test_accuracy_mean", "test_accuracy_std",
               "train_bvol_mean", "train_bvol_std", "ladv_bvol_mean",
               "ladv_bvol_std", "failures"], rows)
    return 0


def _verify_checks(seed):
    """Hermetic diagnostics; yields (name, expected, actual, tol) rows."""
    yield ("chebyshev_tail_3000_0.05", 0.152, geo.chebyshev_tail(3000, 0.05), 1e-3)
    yield ("hoeffding_tail_1e5_0.01", 2.06e-9, vol.hoeffding_tail(100_000, 0.01), 0.02 * 2.06e-9)

    # tube identities: circle annulus and sphere shell, flat patch slab
    r, eps = 0.3, 0.05
    circle = geo.weyl_tube_volume(geo.TubeSpec(2, 1, (2 * math.pi * r,)), eps)
    yield ("tube_circle_annulus", math.pi * ((r + eps) ** 2 - (r - eps) ** 2), circle, 1e-12)
    sphere = geo.weyl_tube_volume(geo.TubeSpec(3, 2, (4 * math.pi, 4 * math.pi)), eps)
    shell = 4 * math.pi / 3 * ((1 + eps) ** 3 - (1 - eps) ** 3)
    yield ("tube_sphere_shell", shell, sphere, 1e-12)
    flat = geo.weyl_tube_volume(geo.TubeSpec(3, 2, (2.5, 0.0)), eps)
    yield ("tube_flat_patch", 2 * eps * 2.5, flat, 1e-12)

    yield ("ratio_expectation_1", 1.0, geo.ratio_expectation(1), 1e-12)
    yield ("ratio_expectation_1e4_above_limit", None,
           float(geo.ratio_expectation(10_000) > math.sqrt(2 / math.pi)), None)
    yield ("ratio_expectation_1e4_below_0.798", None,
           float(geo.ratio_expectation(10_000) < 0.798), None)

    sim = geo.simulate_ratio(3000, 100_000, seed)
    closed = geo.ratio_expectation(3000)
    yield ("simulated_ratio_mean_3000", closed, sim.mean, 4 * sim.std_error)
    yield ("simulated_ratio_var_below_bound", None,
           float(sim.variance <= (math.pi - 2) / 3000), None)
    m2 = geo.ratio_moments(3000).second_moment
    yield ("simulated_second_moment_3000", m2, sim.second_moment, 4 * sim.std_error)

    # Gautschi with x = (n-1)/2, s = 1/2 brackets the Gamma ratio; the
    # upper bound sqrt(n/2) is what the variance bound (pi-2)/n rests on
    ok = all(
        math.sqrt((n - 1) / 2) < geo.gamma_ratio((n + 1) / 2, n / 2) < math.sqrt(n / 2)
        for n in range(2, 10_001))
    yield ("gautschi_inequality_2_1e4", None, float(ok), None)

    # trigonometric integral identity vs quadrature
    worst = 0.0
    ts = np.linspace(0.0, math.pi / 2, 20_001)
    for a in range(6):
        for b in range(6):
            quad = float(np.trapezoid(np.cos(ts) ** a * np.sin(ts) ** b, ts))
            worst = max(worst, abs(quad - geo.cos_sin_integral(a, b)))
    yield ("trig_integral_identity_max_err", 0.0, worst, 1e-8)

    pair, loose = geo.cube_overlap_bound(100, 0.9, 200)
    yield ("cube_overlap_bound_100_0.9_200", None, float(loose < 1e-5), None)


def cmd_verify(config) -> int:
    out = _outdir(config)
    rows, failed = [], 0
    for name, expected, actual, tol in _verify_checks(config["seed"]):
        if tol is None:
            status = "pass" if actual == 1.0 else "fail"
        else:
            status = "pass" if abs(actual - expected) <= tol else "fail"
        if status == "fail":
            failed += 1
        rows.append({"check": name, "expected": expected, "actual": actual,
                     "tolerance": tol, "status": status})
        print(f"[{status}] {name}: expected={expected} actual={actual}")
    write_csv(out / "diagnostics.csv",
              ["check", "expected", "actual", "tolerance", "status"], rows)
    return 1 if failed else 0


def cmd_plot(config) -> int:
    out = _outdir(config)
    spec = PlotSpec(
        x=config["x"], y=config["y"], yerr=config.get("yerr"),
        series=config.get("series"), title=config.get("title", ""),
        logy=config.get("logy", False),
    )
    emit_plot(config["csv"], spec, out / config.get("svg", "plot.svg"))
    return 0


COMMANDS = {
    "train": cmd_train,
    "measure": cmd_measure,
    "sweep": cmd_sweep,
    "dropout-sweep": cmd_dropout_sweep,
    "verify": cmd_verify,
    "plot": cmd_plot,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="boundvol")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config path")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--model", default=None, help="checkpoint path")
        p.add_argument("--data", default=None, help="dataset directory")
        p.add_argument("--threads", type=int, default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args)
        return COMMANDS[args.command](config)
    except (CliError, FileNotFoundError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
