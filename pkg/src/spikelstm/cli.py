"""Command-line front end.

Subcommands: train-ann, convert, train-snn, eval, pipeline-sim,
energy-report, verify. Configs are JSON with a required config_version;
unknown fields are rejected with their path. Dataset paths may be
relative to $SPIKELSTM_DATA_ROOT. Exit codes: 0 success, 1 runtime
failure, 2 config/validation failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import __version__, checkpoint
from .activations import HardActConfig
from .convert import convert as convert_model
from .data import load_feature_tensor, load_tmnist, split_dataset, synthetic_task
from .energy import EnergyModel, audit_multiplier_free, count_ops_ann, estimate_energy
from .errors import ConfigError, SpikeLstmError, ValidationError
from .lstm import AnnLSTM
from .pipeline import LatencyModel, build_schedule, latency_report, simulate_pipelined
from .snn import ConversionPlan, SpikingLSTM, random_spiking_lstm, snn_forward
from .train import TrainConfig, TrainMask, evaluate, fit
from .verify import run_all

DATA_ROOT_ENV = "SPIKELSTM_DATA_ROOT"
CONFIG_VERSION = 1


def _resolve(path: str) -> str:
    if os.path.isabs(path):
        return path
    return os.path.join(os.environ.get(DATA_ROOT_ENV, "."), path)


def _expect_keys(obj: dict, allowed, required, path: str) -> None:
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: expected an object")
    unknown = sorted(set(obj) - set(allowed))
    if unknown:
        raise ConfigError(f"{path}: unknown field(s) {unknown}")
    missing = sorted(set(required) - set(obj))
    if missing:
        raise ConfigError(f"{path}: missing required field(s) {missing}")


def _typed(obj: dict, key: str, kinds, path: str, default=None):
    if key not in obj or obj[key] is None:
        return default
    value = obj[key]
    if kinds is bool and not isinstance(value, bool):
        raise ConfigError(f"{path}.{key}: expected a boolean")
    if kinds is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise ConfigError(f"{path}.{key}: expected an integer")
    if kinds is float and not isinstance(value, (int, float)):
        raise ConfigError(f"{path}.{key}: expected a number")
    if kinds is str and not isinstance(value, str):
        raise ConfigError(f"{path}.{key}: expected a string")
    if kinds is list and not isinstance(value, list):
        raise ConfigError(f"{path}.{key}: expected a list")
    return value


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: invalid JSON ({err})")
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be an object")
    version = cfg.get("config_version")
    if version != CONFIG_VERSION:
        raise ConfigError(f"{path}: config_version must be {CONFIG_VERSION}, got {version!r}")
    return cfg


# ---------------------------------------------------------------------------
# dataset / model builders

_DATASET_KEYS = ("kind", "size", "seed", "n_classes", "n_elements", "n_features",
                 "noise", "dir", "path", "pad_to", "limit_train", "val_fraction",
                 "test_fraction", "split_seed")


def build_dataset(cfg: dict, path: str = "dataset"):
    """Returns (train, val, test) SequenceDatasets."""
    _expect_keys(cfg, _DATASET_KEYS, ("kind",), path)
    kind = _typed(cfg, "kind", str, path)
    val_fraction = _typed(cfg, "val_fraction", float, path, 0.15)
    test_fraction = _typed(cfg, "test_fraction", float, path, 0.15)
    split_seed = _typed(cfg, "split_seed", int, path, 0)
    if kind in ("synthetic-planted", "synthetic-recall"):
        ds = synthetic_task(
            "planted-pattern" if kind == "synthetic-planted" else "delayed-recall",
            size=_typed(cfg, "size", int, path, 600),
            seed=_typed(cfg, "seed", int, path, 1),
            n_classes=_typed(cfg, "n_classes", int, path, 3),
            n_elements=_typed(cfg, "n_elements", int, path, 12),
            n_features=_typed(cfg, "n_features", int, path, 6),
            noise=_typed(cfg, "noise", float, path, 0.5),
        )
        return split_dataset(ds, val_fraction, test_fraction, split_seed)
    if kind == "mnist-idx":
        directory = _typed(cfg, "dir", str, path)
        if directory is None:
            raise ConfigError(f"{path}.dir: required for mnist-idx")
        pad_to = _typed(cfg, "pad_to", int, path, 32)
        full = load_tmnist(_resolve(directory), "train", pad_to)
        limit = _typed(cfg, "limit_train", int, path)
        if limit is not None:
            order = np.random.default_rng(split_seed).permutation(len(full))[:limit]
            full = full.subset(order)
        train, val, _ = split_dataset(full, val_fraction, 0.0, split_seed)
        test = load_tmnist(_resolve(directory), "test", pad_to)
        return train, val, test
    if kind == "seqf":
        file_path = _typed(cfg, "path", str, path)
        if file_path is None:
            raise ConfigError(f"{path}.path: required for seqf")
        ds = load_feature_tensor(_resolve(file_path))
        return split_dataset(ds, val_fraction, test_fraction, split_seed)
    raise ConfigError(f"{path}.kind: unknown dataset kind {kind!r}")


_MODEL_KEYS = ("hidden", "head", "v_sig", "v_tanh_pos", "v_tanh_neg", "init_scale",
               "init_seed", "forget_bias")


def _act_from(cfg: dict, path: str) -> HardActConfig:
    return HardActConfig(
        v_sig=_typed(cfg, "v_sig", float, path, 4.0),
        v_tanh_pos=_typed(cfg, "v_tanh_pos", float, path, 3.0),
        v_tanh_neg=_typed(cfg, "v_tanh_neg", float, path, -2.0),
    )


def build_ann(cfg: dict, input_dim: int, n_classes: int, path: str = "model") -> AnnLSTM:
    _expect_keys(cfg, _MODEL_KEYS, (), path)
    hidden = _typed(cfg, "hidden", list, path, [8])
    head = _typed(cfg, "head", list, path, [])
    rng = np.random.default_rng(_typed(cfg, "init_seed", int, path, 0))
    return AnnLSTM.random(input_dim, hidden, list(head) + [n_classes], rng,
                          act=_act_from(cfg, path),
                          scale=_typed(cfg, "init_scale", float, path, 0.3),
                          forget_bias=_typed(cfg, "forget_bias", float, path, 0.0))


_TRAIN_KEYS = ("epochs", "batch_size", "lr", "optimizer", "grad_clip", "precision",
               "workers", "lr_decay_epochs", "lr_decay_factor", "micro_batch")


def build_train_config(cfg: dict, seed: int, mask: TrainMask, path: str = "train") -> TrainConfig:
    _expect_keys(cfg, _TRAIN_KEYS, (), path)
    return TrainConfig(
        epochs=_typed(cfg, "epochs", int, path, 5),
        batch_size=_typed(cfg, "batch_size", int, path, 32),
        lr=_typed(cfg, "lr", float, path, 1e-3),
        optimizer=_typed(cfg, "optimizer", str, path, "adam"),
        grad_clip=_typed(cfg, "grad_clip", float, path, 5.0),
        precision=_typed(cfg, "precision", str, path, "f64"),
        workers=_typed(cfg, "workers", int, path, 1),
        lr_decay_epochs=tuple(_typed(cfg, "lr_decay_epochs", list, path, [])),
        lr_decay_factor=_typed(cfg, "lr_decay_factor", float, path, 0.1),
        micro_batch=_typed(cfg, "micro_batch", int, path, 32),
        seed=seed,
        mask=mask,
    )


# ---------------------------------------------------------------------------
# commands

def cmd_train_ann(args) -> int:
    cfg = load_config(args.config)
    _expect_keys(cfg, ("config_version", "seed", "dataset", "model", "train", "out_dir"),
                 ("config_version", "dataset", "out_dir"), "config")
    seed = _typed(cfg, "seed", int, "config", 0)
    train, val, _ = build_dataset(cfg["dataset"])
    model = build_ann(cfg.get("model", {}), train.sequences.shape[2], train.n_classes)
    tc = build_train_config(cfg.get("train", {}), seed, TrainMask())
    if args.workers is not None:
        tc.workers = args.workers
    model, history = fit(model, (train.sequences, train.labels),
                         (val.sequences, val.labels), tc, out_dir=cfg["out_dir"])
    best = max(h["accuracy"] for h in history if h["split"] == "val")
    print(f"train-ann done: best val accuracy {best:.4f}; artifacts in {cfg['out_dir']}")
    return 0


def cmd_convert(args) -> int:
    ann = checkpoint.load_model(args.ann_ckpt)
    if not isinstance(ann, AnnLSTM):
        raise ValidationError(f"{args.ann_ckpt} holds a spiking model, expected an ANN")
    snn = convert_model(ann, T=args.time_steps, plan=ConversionPlan(args.analog_gate),
                        shift=(args.shift == "on"), surrogate_gamma=args.gamma,
                        encoding=args.encoding)
    checkpoint.save_model(snn, args.out)
    manifest = {
        "command": "convert", "ann_ckpt": args.ann_ckpt, "time_steps": args.time_steps,
        "shift": args.shift, "analog_gate": args.analog_gate, "encoding": args.encoding,
        "surrogate_gamma": args.gamma, "package_version": __version__,
    }
    with open(args.out + ".manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
    print(f"converted {args.ann_ckpt} -> {args.out} (T={args.time_steps}, "
          f"shift {args.shift}, analog gate {args.analog_gate})")
    return 0


def cmd_train_snn(args) -> int:
    cfg = load_config(args.config)
    _expect_keys(cfg, ("config_version", "seed", "dataset", "model", "train", "snn", "out_dir"),
                 ("config_version", "dataset", "snn", "out_dir"), "config")
    seed = _typed(cfg, "seed", int, "config", 0)
    snn_cfg = cfg["snn"]
    _expect_keys(snn_cfg, ("init_checkpoint", "time_steps", "encoding", "analog_gate",
                           "shift", "surrogate_gamma", "train_threshold", "train_leak",
                           "train_init", "train_bias"), (), "snn")
    mask = TrainMask(
        weights=True,
        threshold=_override(args.train_threshold, _typed(snn_cfg, "train_threshold", bool, "snn", False)),
        leak=_override(args.train_leak, _typed(snn_cfg, "train_leak", bool, "snn", False)),
        mem_init=_override(args.train_init, _typed(snn_cfg, "train_init", bool, "snn", False)),
        step_bias=_typed(snn_cfg, "train_bias", bool, "snn", False),
    )
    train, val, _ = build_dataset(cfg["dataset"])
    T = _typed(snn_cfg, "time_steps", int, "snn", 2)
    encoding = _typed(snn_cfg, "encoding", str, "snn", "direct")
    gamma = _typed(snn_cfg, "surrogate_gamma", float, "snn", 0.3)
    init_ckpt = _typed(snn_cfg, "init_checkpoint", str, "snn")
    if init_ckpt:
        model = checkpoint.load_model(_resolve(init_ckpt))
        if isinstance(model, AnnLSTM):
            model = convert_model(model, T=T, plan=ConversionPlan(
                _typed(snn_cfg, "analog_gate", str, "snn", "i")),
                shift=_typed(snn_cfg, "shift", bool, "snn", True),
                surrogate_gamma=gamma, encoding=encoding)
        else:
            model.time_steps = T
            model.encoding = encoding
    else:
        # no pre-trained model: converted-default LIF parameters on random weights
        mc = cfg.get("model", {})
        _expect_keys(mc, _MODEL_KEYS, (), "model")
        rng = np.random.default_rng(_typed(mc, "init_seed", int, "model", 0))
        model = random_spiking_lstm(
            train.sequences.shape[2], _typed(mc, "hidden", list, "model", [8]),
            list(_typed(mc, "head", list, "model", [])) + [train.n_classes], rng,
            plan=ConversionPlan(_typed(snn_cfg, "analog_gate", str, "snn", "i")),
            act=_act_from(mc, "model"), time_steps=T, encoding=encoding,
            shift=_typed(snn_cfg, "shift", bool, "snn", True),
            scale=_typed(mc, "init_scale", float, "model", 0.3), surrogate_gamma=gamma,
            forget_bias=_typed(mc, "forget_bias", float, "model", 0.0))
    tc = build_train_config(cfg.get("train", {}), seed, mask)
    if args.workers is not None:
        tc.workers = args.workers
    model, history = fit(model, (train.sequences, train.labels),
                         (val.sequences, val.labels), tc, out_dir=cfg["out_dir"])
    best = max(h["accuracy"] for h in history if h["split"] == "val")
    print(f"train-snn done: best val accuracy {best:.4f}; artifacts in {cfg['out_dir']}")
    return 0


def _override(flag, config_value):
    return config_value if flag is None else flag == "on"


def cmd_eval(args) -> int:
    model = checkpoint.load_model(args.ckpt)
    cfg = load_config(args.dataset_config)
    _expect_keys(cfg, ("config_version", "dataset"), ("config_version", "dataset"), "config")
    train, val, test = build_dataset(cfg["dataset"])
    split = {"train": train, "val": val, "test": test}[args.split]
    loss, accuracy, rate = evaluate(model, split.sequences, split.labels, seed=args.seed)
    out = {"command": "eval", "ckpt": args.ckpt, "split": args.split,
           "samples": len(split), "loss": loss, "accuracy": accuracy,
           "mean_hidden_spike_rate": None if np.isnan(rate) else rate}
    print(json.dumps(out, indent=2))
    return 0


def _demo_model(n_features=3, hidden=4, classes=3, T=3, seed=0) -> SpikingLSTM:
    return random_spiking_lstm(n_features, [hidden], [classes],
                               np.random.default_rng(seed), time_steps=T, scale=1.0)


def cmd_pipeline_sim(args) -> int:
    if args.ckpt:
        model = checkpoint.load_model(args.ckpt)
        if isinstance(model, AnnLSTM):
            raise ValidationError("pipeline-sim needs a spiking checkpoint")
        model.time_steps = args.t
    else:
        model = _demo_model(T=args.t, seed=args.seed)
    rng = np.random.default_rng(args.seed)
    sequence = rng.random((args.n, model.input_dim))
    logits_seq, _, op_counts = snn_forward(model, sequence, T=args.t, rng_seed=args.seed)
    logits_pipe, trace = simulate_pipelined(model, sequence, T=args.t, rng_seed=args.seed)
    schedule = build_schedule(args.n, args.t)
    lm = LatencyModel(block_count=args.blocks)
    reports = {mode: latency_report(schedule, op_counts, lm, mode)
               for mode in ("proposed", "nonspiking", "priorwork")}
    out = {
        "command": "pipeline-sim", "n_elements": args.n, "time_steps": args.t,
        "equivalent_to_sequential": bool(np.array_equal(logits_seq, logits_pipe)),
        "max_concurrent_blocks": max(r["active"] for r in trace),
        "latency": reports,
    }
    if args.trace_out:
        with open(args.trace_out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["tick", "active_blocks", "accumulates", "macs",
                             "comparisons", "spikes"])
            for row in trace:
                writer.writerow([row["tick"], row["active"], row["accumulates"],
                                 row["macs"], row["comparisons"], row["spikes"]])
    print(json.dumps(out, indent=2))
    return 0


def cmd_energy_report(args) -> int:
    model = checkpoint.load_model(args.ckpt)
    cfg = load_config(args.dataset_config)
    _expect_keys(cfg, ("config_version", "dataset"), ("config_version", "dataset"), "config")
    _, _, test = build_dataset(cfg["dataset"])
    limit = min(args.limit, len(test))
    em = EnergyModel()
    if isinstance(model, AnnLSTM):
        raise ValidationError("energy-report needs a spiking checkpoint (compare via "
                              "the report's nonspiking baseline)")
    totals = None
    sparsity_rows = []
    for k in range(limit):
        _, stats, ops = snn_forward(model, test.sequences[k], rng_seed=args.seed + k)
        audit_multiplier_free(ops)
        energy = estimate_energy(ops, em)
        if totals is None:
            totals = {"digital": dict.fromkeys(energy["digital"], 0.0),
                      "neuromorphic": dict.fromkeys(energy["neuromorphic"], 0.0),
                      "total_flops": 0}
        for key, value in energy["digital"].items():
            totals["digital"][key] += value / limit
        for key, value in energy["neuromorphic"].items():
            totals["neuromorphic"][key] += value / limit
        totals["total_flops"] += ops.total_flops / limit
        for li, rates in enumerate(stats.gate_rates()):
            sparsity_rows.append({"sample": k, "layer": li, **rates})
    ann_equiv = AnnLSTM(layers=[c.weights for c in model.cells], head=model.head, act=model.act)
    ann_ops = count_ops_ann(ann_equiv, test.sequences.shape[1])
    ann_energy = estimate_energy(ann_ops, em)
    out = {
        "command": "energy-report", "ckpt": args.ckpt, "samples": limit,
        "time_steps": model.time_steps, "encoding": model.encoding,
        "spiking": totals,
        "nonspiking_baseline": {"digital": ann_energy["digital"],
                                "total_flops": ann_energy["total_flops"]},
        "digital_ratio_nonspiking_over_spiking":
            ann_energy["digital"]["total"] / totals["digital"]["total"],
    }
    if args.sparsity_out:
        with open(args.sparsity_out, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["sample", "layer", "f", "i", "g", "o", "c"])
            writer.writeheader()
            for row in sparsity_rows:
                writer.writerow(row)
    if args.csv_out:
        with open(args.csv_out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["model", "bucket", "energy"])
            for bucket, value in totals["digital"].items():
                writer.writerow(["spiking", bucket, f"{value:.6f}"])
            for bucket, value in ann_energy["digital"].items():
                writer.writerow(["nonspiking", bucket, f"{value:.6f}"])
    print(json.dumps(out, indent=2))
    return 0


def cmd_verify(args) -> int:
    results = run_all()
    for r in results:
        print(r.line())
    failures = [r for r in results if not r.passed]
    if args.json_out:
        with open(args.json_out, "w") as fh:
            json.dump([vars(r) for r in results], fh, indent=2)
    if failures:
        print(json.dumps({"failed": [vars(r) for r in failures]}))
        return 1
    print(f"verify: all {len(results)} oracle suites passed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spikelstm",
        description="Multiplier-free spiking LSTM toolkit: training, conversion, "
                    "fine-tuning, pipelined latency and energy models.")
    parser.add_argument("--version", action="version", version=f"spikelstm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-ann", help="train the hard-activation LSTM baseline")
    p.add_argument("--config", required=True, help="JSON config path")
    p.add_argument("--workers", type=int, default=None,
                   help="deterministic micro-batch parallelism")
    p.set_defaults(func=cmd_train_ann)

    p = sub.add_parser("convert", help="convert an ANN checkpoint to a spiking model")
    p.add_argument("--ann-ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--time-steps", type=int, default=2)
    p.add_argument("--shift", choices=("on", "off"), default="on")
    p.add_argument("--analog-gate", choices=("i", "g"), default="i")
    p.add_argument("--encoding", choices=("direct", "poisson"), default="direct")
    p.add_argument("--gamma", type=float, default=0.3, help="surrogate gradient peak")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("train-snn", help="surrogate-gradient fine-tuning / training")
    p.add_argument("--config", required=True)
    p.add_argument("--train-threshold", choices=("on", "off"), default=None)
    p.add_argument("--train-leak", choices=("on", "off"), default=None)
    p.add_argument("--train-init", choices=("on", "off"), default=None)
    p.add_argument("--workers", type=int, default=None,
                   help="deterministic micro-batch parallelism")
    p.set_defaults(func=cmd_train_snn)

    p = sub.add_parser("eval", help="accuracy and sparsity of a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--dataset-config", required=True)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pipeline-sim", help="tick trace and latency for the three schemes")
    p.add_argument("--n", type=int, required=True, help="sequence length N")
    p.add_argument("--t", type=int, required=True, help="time steps T per element")
    p.add_argument("--ckpt", default=None)
    p.add_argument("--blocks", type=int, default=None, help="physical block count")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trace-out", default=None, help="write the per-tick CSV here")
    p.set_defaults(func=cmd_pipeline_sim)

    p = sub.add_parser("energy-report", help="digital + neuromorphic energy breakdowns")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--dataset-config", required=True)
    p.add_argument("--limit", type=int, default=32, help="samples to evaluate")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sparsity-out", default=None, help="per-gate sparsity CSV path")
    p.add_argument("--csv-out", default=None, help="digital breakdown CSV path")
    p.set_defaults(func=cmd_energy_report)

    p = sub.add_parser("verify", help="run every analytical oracle suite")
    p.add_argument("--json-out", default=None)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except ValidationError as err:
        print(f"validation error: {err}", file=sys.stderr)
        return 2
    except SpikeLstmError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
