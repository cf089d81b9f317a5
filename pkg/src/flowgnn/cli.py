"""Command-line entry point.

Commands: extract, synth, train, gridsearch, evaluate, score. Every
command is deterministic given --seed; diagnostics go to stderr as
single timestamped lines and machine-readable output goes only to the
declared files or stdout. Exit codes: 0 success, 2 usage or config
error, 1 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from . import serialize
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import FlowDataError, NeuralNetError
from .graphs import (
    STRUCTURAL_DIM,
    build_flow_graph,
    combined_features,
    flow_aggregate_features,
    read_graphs_jsonl,
    structural_features,
    write_graphs_jsonl,
)
from .ingest import FlowDataset, load_dataset, save_dataset
from .synth import SynthSpec, synth_generate
from .training import (
    ALL_VARIANTS,
    DEFAULT_GRIDS,
    ProtocolSpec,
    TrainConfig,
    feature_matrix,
    grid_search,
    labels_at_level,
    make_job,
    make_split,
    evaluate_metrics,
    train,
)

logger = logging.getLogger("flowgnn")


class UsageError(Exception):
    """Bad arguments or configuration; maps to exit code 2."""


def _setup_logging() -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(
        fmt="%(asctime)s %(levelname)s %(name)s: %(message)s",
        datefmt="%Y-%m-%dT%H:%M:%S",
    ))
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(logging.INFO)


def _apply_overrides(config: dict, overrides: list[str]) -> dict:
    """--set a.b=value, with the value parsed as JSON when possible."""
    for item in overrides:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = config
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise UsageError(f"--set path {key!r} crosses a non-object value")
        node[parts[-1]] = value
    return config


def _load_config(args, required: bool = True) -> dict:
    config: dict = {}
    if getattr(args, "config", None):
        if not os.path.exists(args.config):
            raise UsageError(f"config file not found: {args.config}")
        config = serialize.load_path(args.config)
        if not isinstance(config, dict):
            raise UsageError("config file must hold a JSON object")
    elif required:
        raise UsageError("--config is required for this command")
    return _apply_overrides(config, args.set or [])


def _load_graph_data(path) -> tuple[list, FlowDataset | None]:
    """graphs.jsonl gives graphs only; a dataset manifest also keeps flows."""
    if not os.path.exists(path):
        raise UsageError(f"data file not found: {path}")
    if path.endswith(".jsonl"):
        return read_graphs_jsonl(path), None
    dataset = load_dataset(path)
    return [build_flow_graph(s) for s in dataset.samples], dataset


def _write_feature_csv(path, ids, labels, matrix, names) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fp:
        writer = csv.writer(fp)
        writer.writerow(["sample_id", "binary", "category", "family", *names])
        for i, sample_id in enumerate(ids):
            triple = labels[i]
            row = [sample_id]
            if triple is None:
                row += ["", "", ""]
            else:
                row += [triple.binary, triple.category,
                        "" if triple.family is None else triple.family]
            row += [serialize.format_float(v) for v in matrix[i]]
            writer.writerow(row)


# -- commands -------------------------------------------------------------------


def cmd_extract(args) -> int:
    if not args.manifest:
        raise UsageError("extract needs --manifest")
    if not os.path.exists(args.manifest):
        raise UsageError(f"manifest not found: {args.manifest}")
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    dataset = load_dataset(args.manifest)
    logger.info("loaded %d samples with %d raw features",
                len(dataset.samples), dataset.feature_dim)

    graphs = [build_flow_graph(s) for s in dataset.samples]
    write_graphs_jsonl(graphs, os.path.join(out_dir, "graphs.jsonl"))

    ids = [s.sample_id for s in dataset.samples]
    labels = [s.labels for s in dataset.samples]
    flow_rows = np.vstack([flow_aggregate_features(s) for s in dataset.samples])
    graph_rows = np.vstack([structural_features(g).values for g in graphs])
    combined_rows = np.vstack([
        combined_features(s, g) for s, g in zip(dataset.samples, graphs)
    ])
    flow_names = graphs[0].feature_names
    graph_names = structural_features(graphs[0]).names
    _write_feature_csv(os.path.join(out_dir, "features_flow.csv"),
                       ids, labels, flow_rows, flow_names)
    _write_feature_csv(os.path.join(out_dir, "features_graph.csv"),
                       ids, labels, graph_rows, graph_names)
    _write_feature_csv(os.path.join(out_dir, "features_combined.csv"),
                       ids, labels, combined_rows, tuple(flow_names) + tuple(graph_names))
    logger.info("wrote %d graphs and feature sets (%d/%d/%d columns) to %s",
                len(graphs), flow_rows.shape[1], STRUCTURAL_DIM,
                combined_rows.shape[1], out_dir)
    return 0


def cmd_synth(args) -> int:
    config = _load_config(args)
    spec = SynthSpec.from_dict(config)
    dataset = synth_generate(spec, seed=args.seed)
    out_dir = args.out or "."
    save_dataset(dataset, out_dir)
    logger.info("wrote %d synthetic samples to %s", len(dataset.samples), out_dir)
    return 0


def _protocol_from_config(config: dict) -> ProtocolSpec:
    task = config.get("task")
    variant = config.get("variant")
    if task is None or variant is None:
        raise UsageError("config needs 'task' and 'variant'")
    if variant not in ALL_VARIANTS:
        raise UsageError(f"unknown variant {variant!r}; expected one of {ALL_VARIANTS}")
    split = config.get("split", {})
    try:
        return ProtocolSpec(
            task=task,
            variant=variant,
            feature_set=config.get("feature_set"),
            quota=split.get("quota"),
            val_fraction=split.get("val_fraction"),
            train_fraction=split.get("train_fraction", 0.20),
            unsup_val_fraction=split.get("unsup_val_fraction", 0.10),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _train_setup(args):
    config = _load_config(args)
    if "data" not in config:
        raise UsageError("config needs 'data' (graphs.jsonl or dataset manifest)")
    spec = _protocol_from_config(config)
    seed = args.seed if args.seed is not None else int(config.get("seed", 0))
    try:
        train_config = TrainConfig.from_dict(
            {**config.get("train", {}), "variant": spec.variant, "seed": seed}
        )
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    graphs, dataset = _load_graph_data(config["data"])
    labels_by_level = {"binary": labels_at_level(graphs, "binary")}
    if spec.task in ("category", "family"):
        labels_by_level[spec.task] = labels_at_level(graphs, spec.task)
    raw_features = None
    if spec.variant not in ("clf", "ae", "oc"):
        raw_features = feature_matrix(graphs, spec.feature_set, dataset)
    split = make_split(spec, labels_by_level, seed)
    return config, spec, train_config, seed, graphs, raw_features, labels_by_level, split


def _run_info(spec: ProtocolSpec, seed: int, data: str) -> dict:
    return {
        "task": spec.task,
        "feature_set": spec.feature_set,
        "seed": seed,
        "data": data,
        "split": {
            "quota": spec.quota,
            "val_fraction": spec.val_fraction,
            "train_fraction": spec.train_fraction,
            "unsup_val_fraction": spec.unsup_val_fraction,
        },
    }


def cmd_train(args) -> int:
    config, spec, train_config, seed, graphs, raw_features, labels, split = _train_setup(args)
    job, standardizer = make_job(spec, train_config, split, graphs, raw_features, labels)
    result = train(job)
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    save_checkpoint(os.path.join(out_dir, "checkpoint.json"), result.model,
                    train_config, standardizer, _run_info(spec, seed, config["data"]))
    serialize.dump_path(
        {
            "best_epoch": result.best_epoch,
            "best_val": result.best_val,
            "stopped_epoch": result.stopped_epoch,
            "epochs": [rec.to_dict() for rec in result.history],
        },
        os.path.join(out_dir, "history.json"),
    )
    logger.info("trained %s/%s: best epoch %d, val %.4f",
                spec.task, spec.variant, result.best_epoch, result.best_val)
    return 0


def cmd_gridsearch(args) -> int:
    config, spec, train_config, seed, graphs, raw_features, labels, split = _train_setup(args)
    grid = config.get("grid") or DEFAULT_GRIDS[spec.variant]
    job, standardizer = make_job(spec, train_config, split, graphs, raw_features, labels)
    result = grid_search(grid, job, workers=args.workers)
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    save_checkpoint(os.path.join(out_dir, "checkpoint.json"), result.best_fit.model,
                    result.best_config, standardizer, _run_info(spec, seed, config["data"]))
    serialize.dump_path(result.best_config.to_dict(), os.path.join(out_dir, "best_config.json"))
    serialize.dump_path(
        {"task": spec.task, "variant": spec.variant, "cells": result.cells},
        os.path.join(out_dir, "gridsearch.json"),
    )
    logger.info("grid search over %d cells done; best val %.4f",
                len(result.cells), result.best_fit.best_val)
    return 0


def cmd_evaluate(args) -> int:
    if not args.checkpoint or not os.path.exists(args.checkpoint):
        raise UsageError(f"checkpoint not found: {args.checkpoint}")
    model, train_config, standardizer, run_info = load_checkpoint(args.checkpoint)
    data_path = args.data or run_info.get("data")
    if not data_path:
        raise UsageError("evaluate needs --data (or a checkpoint that records it)")
    graphs, dataset = _load_graph_data(data_path)
    split_info = run_info.get("split", {})
    spec = ProtocolSpec(
        task=run_info["task"],
        variant=train_config.variant,
        feature_set=run_info.get("feature_set"),
        quota=split_info.get("quota"),
        val_fraction=split_info.get("val_fraction"),
        train_fraction=split_info.get("train_fraction", 0.20),
        unsup_val_fraction=split_info.get("unsup_val_fraction", 0.10),
    )
    labels_by_level = {"binary": labels_at_level(graphs, "binary")}
    if spec.task in ("category", "family"):
        labels_by_level[spec.task] = labels_at_level(graphs, spec.task)
    raw_features = None
    if spec.variant not in ("clf", "ae", "oc"):
        raw_features = feature_matrix(graphs, spec.feature_set, dataset)
    split = make_split(spec, labels_by_level, run_info["seed"])
    job, _ = make_job(spec, train_config, split, graphs, raw_features,
                      labels_by_level, standardizer=standardizer)

    report = {
        "task": spec.task,
        "model": spec.variant,
        "splits": {
            part: evaluate_metrics(job, model, indices=getattr(split, part))
            for part in ("train", "val", "test")
        },
    }
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    serialize.dump_path(report, os.path.join(out_dir, "metrics.json"))
    with open(os.path.join(out_dir, "metrics.csv"), "w", encoding="utf-8", newline="") as fp:
        writer = csv.writer(fp)
        writer.writerow(["split", "metric", "value"])
        for part in ("train", "val", "test"):
            entry = report["splits"][part]
            writer.writerow([part, entry["metric"], serialize.format_float(entry["value"])])
    for part in ("train", "val", "test"):
        entry = report["splits"][part]
        logger.info("%s %s = %.4f", part, entry["metric"], entry["value"])
    return 0


def cmd_score(args) -> int:
    if not args.checkpoint or not os.path.exists(args.checkpoint):
        raise UsageError(f"checkpoint not found: {args.checkpoint}")
    model, train_config, standardizer, run_info = load_checkpoint(args.checkpoint)
    if not args.data:
        raise UsageError("score needs --data")
    graphs, dataset = _load_graph_data(args.data)

    if train_config.variant in ("clf", "ae", "oc"):
        from .model import PreparedGraph, make_batch, propagation_matrices

        prepared = [
            PreparedGraph(propagation_matrices(g), standardizer(g.edge_features))
            for g in graphs
        ]
        batch = make_batch(prepared)
        if train_config.variant == "clf":
            values = model.predict_proba(batch)
        else:
            values = model.anomaly_scores(batch)[:, None]
    else:
        features = standardizer(
            feature_matrix(graphs, run_info.get("feature_set"), dataset)
        )
        if train_config.variant == "mlp":
            values = model.predict_proba(features)
        else:
            values = model.anomaly_scores(features)[:, None]

    if values.shape[1] == 1:
        header = ["sample_id", "score"]
    else:
        header = ["sample_id"] + [f"p_class_{i}" for i in range(values.shape[1])]
    rows = [[g.sample_id] + [serialize.format_float(v) for v in values[i]]
            for i, g in enumerate(graphs)]
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fp:
            writer = csv.writer(fp)
            writer.writerow(header)
            writer.writerows(rows)
    else:
        writer = csv.writer(sys.stdout)
        writer.writerow(header)
        writer.writerows(rows)
    logger.info("scored %d graphs", len(graphs))
    return 0


# -- argument parsing ---------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowgnn",
        description="Flow-graph extraction, training and scoring",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_help="JSON config file"):
        p.add_argument("--config", help=config_help)
        p.add_argument("--seed", type=int, default=None, help="root random seed")
        p.add_argument("--out", help="output directory or file")
        p.add_argument("--workers", type=int, default=1, help="parallel workers")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config entry (dotted path)")

    p = sub.add_parser("extract", help="flows to graphs.jsonl plus feature CSVs")
    p.add_argument("--manifest", help="dataset manifest JSON")
    common(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("synth", help="generate a synthetic flow dataset")
    common(p, "synthetic dataset spec JSON")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train one model on one split")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("gridsearch", help="exhaustive hyperparameter search")
    common(p)
    p.set_defaults(func=cmd_gridsearch)

    p = sub.add_parser("evaluate", help="metrics for a checkpoint on its splits")
    p.add_argument("--checkpoint", help="checkpoint JSON")
    p.add_argument("--data", help="graphs.jsonl or dataset manifest")
    common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("score", help="per-graph scores or class probabilities")
    p.add_argument("--checkpoint", help="checkpoint JSON")
    p.add_argument("--data", help="graphs.jsonl or dataset manifest")
    common(p)
    p.set_defaults(func=cmd_score)

    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.seed is None:
        args.seed = 0
    try:
        return args.func(args)
    except UsageError as exc:
        logger.error("%s", exc)
        return 2
    except (FlowDataError, NeuralNetError, OSError, ValueError, KeyError) as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
