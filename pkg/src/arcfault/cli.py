"""Command-line entry point wrapping the full pipeline.

Subcommands: synth, featurize, train, eval, detect, transfer, adapt,
fleet, scale.  Every run validates its config before any work, writes its
reports into --out, and drops a run_manifest.json (config hash, seeds,
package version) for provenance.

Exit codes: 0 success, 2 config validation error, 3 missing input file,
4 bad input file format, 1 unexpected failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .adapt import AdaptationBatch, AlarmRecord, stage1_evolve
from .config import ConfigError, RunConfig, fleet_setup, load_config
from .dataio import (
    FormatError,
    featurize_traces,
    load_trace,
    read_features,
    read_manifest,
    read_model,
    write_features,
    write_manifest,
    write_model,
    write_trace,
)
from .detector import run_detector
from .fleet import collect_fleet_metrics, fleet_report_bytes, run_sim
from .metrics import Metrics
from .rng import make_rng
from .scaling import fit_scaling_law
from .synth import synth_suite
from .train import SingleClassData, scale_sweep, stratified_subsample, train as train_model, evaluate
from .transfer import source_fraction_sweep, target_fraction_sweep

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_FORMAT = 4

CONFIG_ENV_VAR = "ARCFAULT_CONFIG"


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _require_file(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise CliError(f"input file not found: {path}", EXIT_MISSING)
    return p


def _out_dir(path: str) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")


def _write_run_manifest(out: Path, command: str, cfg: RunConfig, inputs: dict) -> None:
    blob = json.dumps(cfg.raw, sort_keys=True).encode()
    _write_json(out / "run_manifest.json", {
        "command": command,
        "package_version": __version__,
        "config_sha256": hashlib.sha256(blob).hexdigest(),
        "config": cfg.raw,
        "seed": cfg.seed,
        "inputs": inputs,
    })


def _metrics_dict(m: Metrics) -> dict:
    return m.as_dict()


def cmd_synth(cfg: RunConfig, args) -> int:
    out = _out_dir(args.out)
    manifest, traces = synth_suite(
        cfg.profiles, cfg.per_category_count, cfg.seed,
        duration=cfg.duration, frame_len=cfg.features.frame_len,
    )
    for i, (entry, trace) in enumerate(zip(manifest.entries, traces)):
        filename = f"{entry.trace_id}.afci"
        write_trace(out / filename, trace)
        manifest.entries[i] = dataclasses.replace(entry, file=filename)
    write_manifest(out / "manifest.json", manifest)
    _write_run_manifest(out, "synth", cfg, {})
    balance = manifest.class_balance()
    print(f"wrote {len(traces)} traces to {out} "
          f"(normal frames {balance['normal_frames']}, arc frames {balance['arc_frames']})")
    return EXIT_OK


def cmd_featurize(cfg: RunConfig, args) -> int:
    manifest_path = _require_file(args.manifest)
    manifest = read_manifest(manifest_path)
    base = manifest_path.parent
    traces = []
    for entry in manifest.entries:
        traces.append(load_trace(base / (entry.file or f"{entry.trace_id}.afci"), entry))
    dataset = featurize_traces(traces, cfg.features)
    out = _out_dir(args.out)
    write_features(out / "features.afcf", dataset)
    _write_run_manifest(out, "featurize", cfg, {"manifest": str(manifest_path)})
    print(f"featurized {len(dataset)} frames -> {out / 'features.afcf'}")
    return EXIT_OK


def cmd_train(cfg: RunConfig, args) -> int:
    dataset = read_features(_require_file(args.features))
    result = train_model(dataset, cfg.arch, cfg.train)
    out = _out_dir(args.out)
    write_model(out / "model.afcm", result.model)
    _write_json(out / "fold_metrics.json", {
        "best_fold": result.best_fold,
        "folds": [_metrics_dict(m) for m in result.fold_metrics],
    })
    _write_run_manifest(out, "train", cfg, {"features": args.features})
    best = result.fold_metrics[result.best_fold]
    print(f"trained {cfg.train.folds} folds; best fold {result.best_fold}: "
          f"accuracy={best.accuracy:.4f} f1={best.f1:.4f}")
    return EXIT_OK


def cmd_eval(cfg: RunConfig, args) -> int:
    model = read_model(_require_file(args.model))
    dataset = read_features(_require_file(args.features))
    metrics = evaluate(model, dataset)
    out = _out_dir(args.out)
    _write_json(out / "metrics.json", _metrics_dict(metrics))
    _write_run_manifest(out, "eval", cfg, {"model": args.model, "features": args.features})
    print(json.dumps(_metrics_dict(metrics), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_detect(cfg: RunConfig, args) -> int:
    model = read_model(_require_file(args.model))
    manifest = read_manifest(_require_file(args.manifest))
    base = Path(args.manifest).parent
    out = _out_dir(args.out)
    reports = []
    total_alarms = 0
    for entry in manifest.entries:
        if args.trace_id and entry.trace_id != args.trace_id:
            continue
        trace = load_trace(base / (entry.file or f"{entry.trace_id}.afci"), entry)
        report = run_detector(model, trace, cfg.detector, cfg.features)
        total_alarms += len(report.alarms)
        reports.append({"trace_id": entry.trace_id, **report.as_dict()})
    _write_json(out / "events.json", reports)
    _write_run_manifest(out, "detect", cfg, {"model": args.model, "manifest": args.manifest})
    print(f"{total_alarms} alarms across {len(reports)} traces")
    return EXIT_OK


def cmd_transfer(cfg: RunConfig, args) -> int:
    source = read_features(_require_file(args.source_features))
    target = read_features(_require_file(args.target_features))
    model = read_model(_require_file(args.model))
    out = _out_dir(args.out)
    if args.sweep == "source":
        curve = source_fraction_sweep(source, cfg.source_fractions, cfg.arch, cfg.train)
        with open(out / "source_sweep.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["fraction", "source_macro_f1"])
            writer.writerows(curve)
        print(f"source sweep over {len(curve)} fractions -> {out / 'source_sweep.csv'}")
    else:
        result = target_fraction_sweep(model, source, target, cfg.target_fractions, cfg.transfer)
        with open(out / "target_sweep.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["fraction", "target_macro_f1", "source_macro_f1", "arc_accuracy"])
            for row in result.rows:
                writer.writerow([row.fraction, row.target_macro_f1,
                                 row.source_macro_f1, row.target_arc_accuracy])
        if result.skipped:
            _write_json(out / "skipped.json", [{"fraction": f, "reason": r} for f, r in result.skipped])
        print(f"target sweep: {len(result.rows)} rows, {len(result.skipped)} skipped")
    _write_run_manifest(out, "transfer", cfg, {
        "model": args.model, "source_features": args.source_features,
        "target_features": args.target_features,
    })
    return EXIT_OK


def cmd_adapt(cfg: RunConfig, args) -> int:
    model = read_model(_require_file(args.model))
    novel = read_features(_require_file(args.novel_features))
    archive = read_features(_require_file(args.archive_features))
    normal_rows = np.nonzero(novel.y == 0)[0]
    if len(normal_rows) == 0:
        raise CliError("novel features contain no normal-labeled rows", EXIT_CONFIG)
    batch = AdaptationBatch(threshold=min(len(normal_rows), args.batch_threshold))
    for i in normal_rows:
        batch.add(AlarmRecord(
            device_id="cli", timestamp=0.0,
            frame=np.zeros(cfg.features.frame_len, dtype=np.float32),
            vector=novel.x[i], profile_id="cli", category="novel",
            model_version=model.version, trace_id=f"novel-{i}", frame_index=0,
        ))
    best, log = stage1_evolve(model, batch, archive, cfg.evolution, make_rng(cfg.seed))
    out = _out_dir(args.out)
    write_model(out / "adapted.afcm", best)
    with open(out / "search_log.jsonl", "w") as fh:
        for entry in log["candidates"]:
            fh.write(json.dumps(entry, sort_keys=True, default=_json_default) + "\n")
    _write_json(out / "search_summary.json", {
        "best_fitness": log["best_fitness"],
        "best_config": log["best_config"],
        "saturated": log["saturated"],
    })
    _write_run_manifest(out, "adapt", cfg, {
        "model": args.model, "novel_features": args.novel_features,
        "archive_features": args.archive_features,
    })
    print(f"stage-1 evolution: best fitness {log['best_fitness']:.4f}, "
          f"saturated={log['saturated']}")
    return EXIT_OK


def cmd_fleet(cfg: RunConfig, args) -> int:
    model = read_model(_require_file(args.model))
    archive = read_features(_require_file(args.archive_features))
    devices, plan, fleet_cfg = fleet_setup(cfg)
    report = run_sim(devices, plan, model, archive, fleet_cfg, cfg.seed)
    out = _out_dir(args.out)
    (out / "fleet_report.json").write_bytes(fleet_report_bytes(report))
    metrics = collect_fleet_metrics(report)
    with open(out / "fleet_devices.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["device_id", "alarms", "precision_before", "precision_after"])
        for row in metrics["devices"]:
            writer.writerow([row["device_id"], row["alarms"],
                             row["precision_before"], row["precision_after"]])
    _write_run_manifest(out, "fleet", cfg, {"model": args.model,
                                            "archive_features": args.archive_features})
    decisions = [d["decision"] for d in report["decisions"]]
    print(f"fleet sim: {len(devices)} devices, decisions={decisions}")
    return EXIT_OK


def cmd_scale(cfg: RunConfig, args) -> int:
    dataset = read_features(_require_file(args.features))
    points = scale_sweep(dataset, cfg.scale_fractions, cfg.arch, cfg.train)
    out = _out_dir(args.out)
    with open(out / "scale_curve.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "loss"])
        writer.writerows(points)
    fit = fit_scaling_law(points)
    _write_json(out / "scaling_fit.json", {
        "a": fit.a, "alpha": fit.alpha, "l_inf": fit.l_inf, "rmse": fit.rmse,
    })
    _write_run_manifest(out, "scale", cfg, {"features": args.features})
    print(f"scale sweep: {len(points)} points, fitted alpha={fit.alpha:.3f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="arcfault",
        description="Spectral DC arc-fault detection pipeline",
    )
    parser.add_argument("--config", default=None,
                        help=f"JSON config file (default: ${CONFIG_ENV_VAR})")
    parser.add_argument("--set", action="append", default=[], metavar="PATH=VALUE",
                        help="override a config key, e.g. --set train.epochs=5")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate the synthetic trace suite")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("featurize", help="featurize traces from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_featurize)

    p = sub.add_parser("train", help="train the detector on a feature file")
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a model on a feature file")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("detect", help="stream the detector over stored traces")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--trace-id", default=None, help="restrict to one trace")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_detect)

    p = sub.add_parser("transfer", help="cross-hardware sweeps and adaptation")
    p.add_argument("--model", required=True)
    p.add_argument("--source-features", required=True)
    p.add_argument("--target-features", required=True)
    p.add_argument("--sweep", choices=["source", "target"], default="target")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_transfer)

    p = sub.add_parser("adapt", help="stage-1 evolution on a novelty batch")
    p.add_argument("--model", required=True)
    p.add_argument("--novel-features", required=True)
    p.add_argument("--archive-features", required=True)
    p.add_argument("--batch-threshold", type=int, default=64)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_adapt)

    p = sub.add_parser("fleet", help="run the fleet simulation")
    p.add_argument("--model", required=True)
    p.add_argument("--archive-features", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_fleet)

    p = sub.add_parser("scale", help="training-set scaling sweep and fit")
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_scale)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    config_path = args.config or os.environ.get(CONFIG_ENV_VAR)
    try:
        if config_path is not None:
            _require_file(config_path)
        cfg = load_config(config_path, args.set)
        return args.fn(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except FileNotFoundError as exc:
        print(f"missing file: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except SingleClassData as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
