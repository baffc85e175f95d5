"""Command-line front end: train / decompose / eval / report.

Verbs:

* ``train``: run one ablation cell (presets baseline / baseline_nu / trp /
  trp_nu differ only in nuclear weight and projection period) and write
  checkpoint, metrics CSV, trajectory files, and a run manifest.
* ``decompose``: replace every conv layer of a checkpoint with its
  two-layer low-rank cascade and report per-layer FLOPs.
* ``eval``: accuracy/loss of a checkpoint on a dataset.
* ``report``: turn a run's trajectory files into plot-ready CSVs.

Config files are JSON with the TrpConfig field names; flag precedence is
defaults < config file < preset < explicit flags.  Exit codes: 0 success,
2 config error, 3 IO error, 4 numerical failure.  TRP_LOG_LEVEL controls
stderr verbosity; stdout carries only the machine-readable results.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import Dataset, generate_synthetic, load_idx
from .exceptions import (
    CheckpointError,
    ConfigError,
    IdxFormatError,
    NumericalError,
    RankPruneError,
)
from .net import Conv2D, NetworkModel, evaluate, load_model, save_model, tiny_conv_net
from .reshape import SCHEMES, decompose_export, flops_report
from .trp import TrpConfig, train

log = logging.getLogger("rankprune")

# ablation cells; each preset overrides exactly (nuclear_lambda, period_m)
PRESETS = {
    "baseline": {"nuclear_lambda": 0.0, "period_m": None},
    "baseline_nu": {"nuclear_lambda": 0.0003, "period_m": None},
    "trp": {"nuclear_lambda": 0.0, "period_m": 20},
    "trp_nu": {"nuclear_lambda": 0.0003, "period_m": 20},
}

_CONFIG_KEYS = {
    "period_m",
    "energy_e",
    "nuclear_lambda",
    "scheme",
    "lr_schedule",
    "momentum",
    "weight_decay",
    "epochs",
    "batch_size",
    "seed",
    "mode",
}

_SYNTH_KEYS = {"classes", "per_class", "size", "noise", "train_fraction"}


def _load_config_file(path) -> tuple[dict, dict]:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    synth = raw.pop("synthetic", {})
    if not isinstance(synth, dict) or not set(synth) <= _SYNTH_KEYS:
        raise ConfigError(f"synthetic section allows keys {sorted(_SYNTH_KEYS)}")
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    return raw, synth


def build_config(args) -> tuple[TrpConfig, dict]:
    """Merge defaults, config file, preset, and explicit flags."""
    fields: dict = {}
    synth: dict = {}
    if getattr(args, "config", None):
        fields, synth = _load_config_file(args.config)
    if getattr(args, "preset", None):
        fields.update(PRESETS[args.preset])
    for flag in ("seed", "scheme", "energy"):
        value = getattr(args, flag, None)
        if value is not None:
            fields["energy_e" if flag == "energy" else flag] = value
    if "lr_schedule" in fields:
        fields["lr_schedule"] = tuple((int(ep), float(lr)) for ep, lr in fields["lr_schedule"])
    return TrpConfig(**fields), synth


def build_dataset(spec: str, config: TrpConfig, synth: dict) -> Dataset:
    if spec == "synthetic":
        params = dict(synth)
        if "size" in params:
            params["size"] = tuple(params["size"])
        return generate_synthetic(seed=config.seed, **params)
    if spec.startswith("idx:"):
        parts = spec[4:].split(",")
        if len(parts) != 2:
            raise ConfigError(f"idx dataset spec must be idx:IMAGES,LABELS, got {spec!r}")
        return load_idx(parts[0], parts[1])
    raise ConfigError(f"unknown dataset spec {spec!r}")


def _eval_split(dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Held-out split, or every sample when nothing is held out."""
    if dataset.test_idx.size:
        return dataset.test_images, dataset.test_labels
    return dataset.images, dataset.labels


def _fmt(value: float) -> str:
    """Shortest round-trip float text; keeps emitted files byte-stable."""
    return repr(float(value))


def _write_metrics_csv(path: Path, metrics) -> None:
    lines = ["epoch,train_loss,test_acc"]
    lines += [f"{m.epoch},{_fmt(m.train_loss)},{_fmt(m.test_acc)}" for m in metrics]
    path.write_text("\n".join(lines) + "\n")


def _write_trajectory_files(csv_path: Path, jsonl_path: Path, trajectory) -> None:
    lines = ["layer,t,z,k,fro_norm,bound_stat,bound_holds"]
    records = []
    for ev in trajectory.events:
        lines.append(
            f"{ev.layer},{ev.t},{ev.z},{ev.k},{_fmt(ev.fro_norm)},"
            f"{_fmt(ev.bound_stat)},{str(ev.bound_holds).lower()}"
        )
        records.append(
            json.dumps(
                {
                    "layer": ev.layer,
                    "t": ev.t,
                    "z": ev.z,
                    "k": ev.k,
                    "fro_norm": ev.fro_norm,
                    "bound_stat": ev.bound_stat,
                    "bound_holds": ev.bound_holds,
                    "discarded_energy": ev.discarded_energy,
                    "er": [float(v) for v in ev.er],
                },
                sort_keys=True,
            )
        )
    csv_path.write_text("\n".join(lines) + "\n")
    jsonl_path.write_text("\n".join(records) + "\n")


def cmd_train(args) -> int:
    config, synth = build_config(args)
    dataset = build_dataset(args.dataset, config, synth)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = out_dir / "manifest.json"
    if manifest_path.exists():
        raise OSError(f"out dir already contains a run: {manifest_path}")
    if args.init:
        model = load_model(args.init)
        config = TrpConfig(**{**_config_dict(config), "mode": "finetune"})
    elif config.mode == "finetune":
        raise ConfigError("mode 'finetune' requires --init CHECKPOINT")
    else:
        _, ch, h, w = dataset.images.shape
        model = tiny_conv_net(ch, dataset.class_count, (h, w), config.seed)
    log.info("training: %d params, %d train samples", model.param_count(), dataset.train_idx.size)
    result = train(model, dataset, config)
    for m in result.metrics:
        log.info("epoch %d: train_loss=%.4f test_acc=%.4f", m.epoch, m.train_loss, m.test_acc)

    artifacts = {"manifest": "manifest.json", "checkpoint": "checkpoint.trpk",
                 "metrics_csv": "metrics.csv"}
    save_model(result.model, out_dir / "checkpoint.trpk")
    _write_metrics_csv(out_dir / "metrics.csv", result.metrics)
    if config.period_m is not None:
        artifacts["trajectory_csv"] = "trajectory.csv"
        artifacts["trajectory_er"] = "trajectory_er.jsonl"
        _write_trajectory_files(
            out_dir / "trajectory.csv", out_dir / "trajectory_er.jsonl", result.trajectory
        )
    manifest = {
        "toolkit_version": __version__,
        "command": "train",
        "seed": config.seed,
        "config": _config_dict(config),
        "dataset": {
            "spec": args.dataset,
            "fingerprint": dataset.fingerprint(),
            "shape": list(dataset.images.shape),
            "class_count": dataset.class_count,
        },
        "artifacts": artifacts,
    }
    manifest_path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    final_acc = result.metrics[-1].test_acc
    print(json.dumps({"manifest": str(manifest_path), "test_acc": final_acc}, sort_keys=True))
    return 0


def _config_dict(config: TrpConfig) -> dict:
    d = dataclasses.asdict(config)
    d["lr_schedule"] = [[ep, lr] for ep, lr in config.lr_schedule]
    return d


def conv_feature_sizes(model: NetworkModel, image_hw: tuple[int, int]) -> list:
    """Output (h, w) of each conv layer in order, for stride-1 same padding."""
    sizes = []
    h, w = image_hw
    for layer in model.layers:
        if isinstance(layer, Conv2D):
            sizes.append((h, w))
        elif layer.kind == "avgpool2":
            h, w = h // 2, w // 2
        elif layer.kind == "dense":
            break
    return sizes


def cmd_decompose(args) -> int:
    model = load_model(args.checkpoint)
    scheme = args.scheme or "channel"
    energy = args.energy if args.energy is not None else 0.02
    try:
        h, w = (int(v) for v in args.image_size.split(","))
    except ValueError as exc:
        raise ConfigError(f"--image-size must be H,W, got {args.image_size!r}") from exc
    sizes = conv_feature_sizes(model, (h, w))
    new_layers = []
    reports = []
    conv_ordinal = 0
    for layer in model.layers:
        if not isinstance(layer, Conv2D):
            new_layers.append(layer)
            continue
        pair = decompose_export(layer.w, scheme, energy)
        new_layers.append(Conv2D(pair.first, np.zeros(pair.rank)))
        new_layers.append(Conv2D(pair.second, layer.b))
        reports.append(flops_report(layer.w.shape, sizes[conv_ordinal], scheme, pair.rank))
        print(
            f"layer {conv_ordinal}: k={pair.rank} original={reports[-1].original} "
            f"decomposed={reports[-1].decomposed} speedup={_fmt(reports[-1].speedup)}"
        )
        conv_ordinal += 1
    total_orig = sum(r.original for r in reports)
    total_dec = sum(r.decomposed for r in reports)
    print(
        f"total: original={total_orig} decomposed={total_dec} "
        f"speedup={_fmt(total_orig / total_dec)}"
    )
    save_model(NetworkModel(layers=new_layers), args.out)
    print(
        json.dumps(
            {
                "checkpoint": str(args.out),
                "scheme": scheme,
                "energy": energy,
                "total_original": total_orig,
                "total_decomposed": total_dec,
                "total_speedup": total_orig / total_dec,
            },
            sort_keys=True,
        )
    )
    return 0


def cmd_eval(args) -> int:
    model = load_model(args.checkpoint)
    config, synth = build_config(args)
    dataset = build_dataset(args.dataset, config, synth)
    images, labels = _eval_split(dataset)
    acc, loss = evaluate(model, images, labels)
    print(f"accuracy={_fmt(acc)} loss={_fmt(loss)} n={labels.shape[0]}")
    print(json.dumps({"accuracy": acc, "loss": loss, "n": int(labels.shape[0])}, sort_keys=True))
    return 0


def cmd_report(args) -> int:
    run_dir = Path(args.run)
    jsonl_path = run_dir / "trajectory_er.jsonl"
    if not (run_dir / "trajectory.csv").exists() or not jsonl_path.exists():
        raise OSError(f"no trajectory files in {run_dir} (was this a projection-enabled run?)")
    events = [json.loads(line) for line in jsonl_path.read_text().splitlines() if line]
    report_dir = run_dir / "report"
    report_dir.mkdir(exist_ok=True)
    by_layer: dict[int, list[dict]] = {}
    for ev in events:
        by_layer.setdefault(ev["layer"], []).append(ev)
    summary = ["layer initial_rank final_rank bound_holds_fraction"]
    for layer in sorted(by_layer):
        evs = sorted(by_layer[layer], key=lambda e: e["t"])
        lines = ["z,i,er"]
        for ev in evs:
            for i, er in enumerate(ev["er"], start=1):
                lines.append(f"{ev['z']},{i},{_fmt(er)}")
        (report_dir / f"er_layer{layer}.csv").write_text("\n".join(lines) + "\n")
        frac = sum(1 for e in evs if e["bound_holds"]) / len(evs)
        summary.append(f"{layer} {evs[0]['k']} {evs[-1]['k']} {_fmt(frac)}")
    (report_dir / "summary.txt").write_text("\n".join(summary) + "\n")
    print(json.dumps({"report_dir": str(report_dir), "layers": sorted(by_layer)}, sort_keys=True))
    return 0


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file (TrpConfig field names)")
    p.add_argument("--seed", type=int, help="override config seed")
    p.add_argument("--scheme", choices=SCHEMES, help="override decomposition scheme")
    p.add_argument("--energy", type=float, help="override energy threshold e")


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="rankprune",
        description="Train small conv nets under periodic low-rank projection "
        "and export decomposed cascades.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    pt = sub.add_parser("train", help="run one training cell and write artifacts")
    _add_config_flags(pt)
    pt.add_argument("--dataset", default="synthetic", help="synthetic or idx:IMAGES,LABELS")
    pt.add_argument("--out", required=True, help="output directory for run artifacts")
    pt.add_argument("--preset", choices=sorted(PRESETS), help="ablation cell preset")
    pt.add_argument("--init", help="checkpoint to finetune from")
    pt.set_defaults(func=cmd_train)

    pd = sub.add_parser("decompose", help="export a checkpoint as two-layer cascades")
    pd.add_argument("--checkpoint", required=True)
    pd.add_argument("--out", required=True, help="output checkpoint path")
    pd.add_argument("--scheme", choices=SCHEMES)
    pd.add_argument("--energy", type=float)
    pd.add_argument("--image-size", default="8,8", help="input H,W for the FLOPs report")
    pd.set_defaults(func=cmd_decompose)

    pe = sub.add_parser("eval", help="accuracy/loss of a checkpoint on a dataset")
    _add_config_flags(pe)
    pe.add_argument("--checkpoint", required=True)
    pe.add_argument("--dataset", default="synthetic", help="synthetic or idx:IMAGES,LABELS")
    pe.set_defaults(func=cmd_eval)

    pr = sub.add_parser("report", help="emit plot-ready CSVs from a run's trajectory")
    pr.add_argument("--run", required=True, help="run directory written by train")
    pr.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    level = os.environ.get("TRP_LOG_LEVEL", "WARNING").upper()
    if level not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
        level = "WARNING"
    logging.basicConfig(
        level=level,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
        force=True,
    )
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except (IdxFormatError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except RankPruneError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
