"""Training harness: early stopping, grid search and the repeated-split
evaluation protocol.

Every run is a pure function of (data, config, seed). Supervised tasks
draw a balanced per-class training quota and report weighted F1;
unsupervised detection trains on a stratified fraction of the data and
reports AUROC against the binary label. Model selection always uses the
validation split; test metrics are computed once, for the selected
configuration only.
"""

from __future__ import annotations

import csv
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import product
from typing import Callable

import numpy as np

from . import serialize
from .errors import NumericalError
from .graphs import FlowGraph, combined_features, flow_aggregate_features, structural_features
from .ingest import FlowDataset
from .metrics import MetricReport, auroc, per_class_precision_recall, weighted_f1
from .mlp import MLP_VARIANTS, DenseNetwork
from .model import (
    VARIANTS as GRAPH_VARIANTS,
    FlowGraphNetwork,
    GraphBatch,
    PreparedGraph,
    make_batch,
    propagation_matrices,
)
from .nn import Adam, TRAIN
from .preprocess import Standardizer, standardize_fit
from .splits import SplitPlan, supervised_split, unsupervised_split

logger = logging.getLogger(__name__)

ALL_VARIANTS = GRAPH_VARIANTS + MLP_VARIANTS
SUPERVISED_TASKS = ("binary", "category", "family")
FEATURE_SETS = ("flow", "graph", "combined")

# hyperparameter search spaces; keys match TrainConfig on-disk names
DEFAULT_GRIDS: dict[str, dict[str, list]] = {
    "clf": {
        "num_layers": [1, 2],
        "num_hidden": [16, 32, 64, 128],
        "learning_rate": [1e-3, 1e-2],
        "dropout": [0.0, 0.2, 0.4, 0.6],
        "pool": ["mean", "add", "max"],
    },
    "mlp": {
        "num_layers": [1, 2],
        "num_hidden": [16, 32, 64, 128],
        "l2": [0.0, 1e-1, 1e-2, 1e-3, 1e-4],
    },
}
DEFAULT_GRIDS["ae"] = dict(DEFAULT_GRIDS["clf"])
DEFAULT_GRIDS["oc"] = dict(DEFAULT_GRIDS["clf"])
DEFAULT_GRIDS["mlp_ae"] = dict(DEFAULT_GRIDS["mlp"])
DEFAULT_GRIDS["mlp_oc"] = dict(DEFAULT_GRIDS["mlp"])


@dataclass(frozen=True)
class TrainConfig:
    variant: str = "clf"
    num_layers: int = 1
    num_hidden: int = 32
    learning_rate: float = 1e-3
    dropout: float = 0.0
    pool: str = "mean"
    lambda_: float = 1e-3
    l2: float = 0.0
    patience: int = 20
    max_epochs: int = 1000
    batch_size: int = 32
    seed: int = 0
    val_criterion: str = "auto"

    EXTERNAL_NAMES = {"lambda_": "lambda"}

    def to_dict(self) -> dict:
        return {
            self.EXTERNAL_NAMES.get(name, name): getattr(self, name)
            for name in self.__dataclass_fields__
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "TrainConfig":
        reverse = {v: k for k, v in cls.EXTERNAL_NAMES.items()}
        kwargs = {}
        for key, value in raw.items():
            name = reverse.get(key, key)
            if name not in cls.__dataclass_fields__:
                raise ValueError(f"unknown train config key {key!r}")
            kwargs[name] = value
        return cls(**kwargs)


def build_model(config: TrainConfig, in_dim: int, num_classes: int | None,
                rng: np.random.Generator):
    if config.variant in GRAPH_VARIANTS:
        return FlowGraphNetwork(
            variant=config.variant,
            in_dim=in_dim,
            num_hidden=config.num_hidden,
            num_layers=config.num_layers,
            rng=rng,
            num_classes=num_classes,
            pool=config.pool,
            dropout_p=config.dropout,
            weight_decay=config.lambda_,
        )
    if config.variant in MLP_VARIANTS:
        return DenseNetwork(
            variant=config.variant,
            in_dim=in_dim,
            num_hidden=config.num_hidden,
            num_layers=config.num_layers,
            rng=rng,
            num_classes=num_classes,
            l2=config.l2,
        )
    raise ValueError(f"unknown variant {config.variant!r}")


def labels_at_level(graphs: list[FlowGraph], level: str) -> np.ndarray:
    values = []
    for g in graphs:
        if g.labels is None or g.labels.at_level(level) is None:
            raise ValueError(f"graph {g.sample_id!r} lacks a {level} label")
        values.append(g.labels.at_level(level))
    return np.asarray(values, dtype=np.intp)


def feature_matrix(graphs: list[FlowGraph], feature_set: str,
                   dataset: FlowDataset | None = None) -> np.ndarray:
    """Per-sample baseline feature matrix (raw, before standardization)."""
    if feature_set not in FEATURE_SETS:
        raise ValueError(f"feature_set must be one of {FEATURE_SETS}")
    if feature_set == "graph":
        return np.vstack([structural_features(g).values for g in graphs])
    if dataset is None:
        raise ValueError(f"the {feature_set!r} feature set needs the flow dataset")
    by_id = {s.sample_id: s for s in dataset.samples}
    rows = []
    for g in graphs:
        sample = by_id[g.sample_id]
        if feature_set == "flow":
            rows.append(flow_aggregate_features(sample))
        else:
            rows.append(combined_features(sample, g))
    return np.vstack(rows)


# -- single training run ------------------------------------------------------


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_score: float

    def to_dict(self) -> dict:
        return {"epoch": self.epoch, "train_loss": self.train_loss, "val_score": self.val_score}


@dataclass
class FitResult:
    model: FlowGraphNetwork | DenseNetwork
    config: TrainConfig
    history: list[EpochRecord]
    best_epoch: int
    best_val: float
    stopped_epoch: int


@dataclass(frozen=True, eq=False)
class TrainJob:
    """A picklable description of one training run on one split."""

    config: TrainConfig
    split: SplitPlan
    prepared: tuple[PreparedGraph, ...] | None = None
    features: np.ndarray | None = None
    y: np.ndarray | None = None
    binary: np.ndarray | None = None
    num_classes: int | None = None

    @property
    def is_graph(self) -> bool:
        return self.config.variant in GRAPH_VARIANTS

    @property
    def in_dim(self) -> int:
        if self.is_graph:
            return self.prepared[0].x.shape[1]
        return self.features.shape[1]


def _graph_batch(job: TrainJob, indices) -> GraphBatch:
    return make_batch([job.prepared[i] for i in indices])


def _val_criterion(job: TrainJob, model) -> Callable[[], float]:
    kind = job.config.val_criterion
    if kind == "auto":
        kind = "f1" if job.config.variant in ("clf", "mlp") else "auroc"
    val = list(job.split.val)

    if kind == "f1":
        y_val = job.y[val]

        def score() -> float:
            return weighted_f1(y_val, _predict(job, model, val))
    elif kind == "auroc":
        y_val = job.binary[val]

        def score() -> float:
            return auroc(_scores(job, model, val), y_val)
    elif kind == "neg_loss":

        def score() -> float:
            if job.is_graph:
                batch = _graph_batch(job, val)
                loss = model.loss(batch, None if job.y is None else job.y[val], mode="eval")
            else:
                loss = model.loss(job.features[val], None if job.y is None else job.y[val], mode="eval")
            return -loss.item()
    else:
        raise ValueError(f"unknown validation criterion {kind!r}")
    return score


def _predict(job: TrainJob, model, indices) -> np.ndarray:
    if job.is_graph:
        return model.predict_proba(_graph_batch(job, indices)).argmax(axis=1)
    return model.predict_proba(job.features[indices]).argmax(axis=1)


def _scores(job: TrainJob, model, indices) -> np.ndarray:
    if job.is_graph:
        return model.anomaly_scores(_graph_batch(job, indices))
    return model.anomaly_scores(job.features[indices])


def train(job: TrainJob,
          criterion_fn: Callable[[object, int], float] | None = None) -> FitResult:
    """Train with early stopping; returns the best-epoch model.

    The validation criterion is recomputed after every epoch; training
    stops after `patience` consecutive epochs without strict improvement
    or at `max_epochs`. criterion_fn, when given, replaces the validation
    computation (used to exercise the stopping logic directly).
    """
    config = job.config
    rng = np.random.default_rng(config.seed)
    model = build_model(config, job.in_dim, job.num_classes, rng)
    train_idx = np.asarray(job.split.train, dtype=np.intp)

    if config.variant == "oc":
        model.init_center(_graph_batch(job, train_idx))
    elif config.variant == "mlp_oc":
        model.init_center(job.features[train_idx])

    optimizer = Adam(model.parameters(), lr=config.learning_rate)
    val_score = None if criterion_fn is not None else _val_criterion(job, model)

    best_val = -np.inf
    best_state = model.state()
    best_epoch = 0
    bad_epochs = 0
    history: list[EpochRecord] = []
    epoch = 0
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(train_idx)
        losses = []
        try:
            for lo in range(0, len(order), config.batch_size):
                chunk = order[lo:lo + config.batch_size]
                if job.is_graph:
                    batch = _graph_batch(job, chunk)
                    loss = model.loss(batch, None if job.y is None else job.y[chunk],
                                      mode=TRAIN, rng=rng)
                else:
                    loss = model.loss(job.features[chunk],
                                      None if job.y is None else job.y[chunk],
                                      mode=TRAIN, rng=rng)
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                losses.append(loss.item())
            score = criterion_fn(model, epoch) if criterion_fn is not None else val_score()
        except NumericalError as exc:
            raise NumericalError(f"epoch {epoch}: {exc}") from exc
        history.append(EpochRecord(epoch, float(np.mean(losses)), float(score)))
        if score > best_val:
            best_val = score
            best_epoch = epoch
            best_state = model.state()
            bad_epochs = 0
        else:
            bad_epochs += 1
        if bad_epochs >= config.patience:
            break
    model.load_state(best_state)
    return FitResult(model, config, history, best_epoch, float(best_val), epoch)


def evaluate_metrics(job: TrainJob, model, indices=None) -> dict:
    """Metric dict on the given indices (default: the test split)."""
    idx = list(job.split.test if indices is None else indices)
    if job.config.variant in ("clf", "mlp"):
        y_true = job.y[idx]
        y_pred = _predict(job, model, idx)
        return {
            "metric": "weighted_f1",
            "value": weighted_f1(y_true, y_pred),
            "per_class": {
                str(cls): {"precision": p, "recall": r}
                for cls, (p, r) in per_class_precision_recall(y_true, y_pred).items()
            },
        }
    return {
        "metric": "auroc",
        "value": auroc(_scores(job, model, idx), job.binary[idx]),
    }


# -- grid search ---------------------------------------------------------------


def expand_grid(grid: dict[str, list]) -> list[dict]:
    """Cartesian product in key order; the last key varies fastest."""
    keys = list(grid)
    return [dict(zip(keys, combo)) for combo in product(*(grid[k] for k in keys))]


@dataclass
class GridSearchResult:
    best_config: TrainConfig
    best_fit: FitResult
    cells: list[dict] = field(default_factory=list)


def _fit_cell(args: tuple[TrainJob, dict]) -> tuple[dict, float, int]:
    job, overrides = args
    result = train(job)
    return overrides, result.best_val, result.best_epoch


def grid_search(grid: dict[str, list], base_job: TrainJob,
                workers: int = 1) -> GridSearchResult:
    """Exhaustive search; ties keep the earliest cell in grid order.

    The winning cell is retrained once (same seed, hence identical) to
    recover its model; test metrics are for the caller to compute.
    """
    combos = expand_grid(grid)
    jobs = [
        (replace(base_job, config=TrainConfig.from_dict({**base_job.config.to_dict(),
                                                         **overrides})), overrides)
        for overrides in combos
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_fit_cell, jobs))
    else:
        outcomes = [_fit_cell(j) for j in jobs]

    cells = [
        {"config": overrides, "val_score": score, "best_epoch": best_epoch}
        for overrides, score, best_epoch in outcomes
    ]
    best_index = 0
    for i, cell in enumerate(cells):
        if cell["val_score"] > cells[best_index]["val_score"]:
            best_index = i
    best_job = jobs[best_index][0]
    best_fit = train(best_job)
    logger.info("grid search selected cell %d/%d (val %.4f)",
                best_index + 1, len(cells), cells[best_index]["val_score"])
    return GridSearchResult(best_job.config, best_fit, cells)


# -- repeated-split protocol -----------------------------------------------------


@dataclass(frozen=True)
class ProtocolSpec:
    """What to run: task, variant and split parameters."""

    task: str  # binary | category | family | unsupervised
    variant: str
    feature_set: str | None = None  # mlp variants only
    quota: int | None = None
    val_fraction: float | None = None
    train_fraction: float = 0.20
    unsup_val_fraction: float = 0.10

    def __post_init__(self):
        if self.task not in SUPERVISED_TASKS + ("unsupervised",):
            raise ValueError(f"unknown task {self.task!r}")
        if self.variant not in ALL_VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        supervised_variant = self.variant in ("clf", "mlp")
        if supervised_variant != (self.task != "unsupervised"):
            raise ValueError(f"variant {self.variant!r} does not fit task {self.task!r}")
        if self.variant in MLP_VARIANTS and self.feature_set is None:
            raise ValueError("mlp variants need a feature_set")


@dataclass
class ProtocolResult:
    report: MetricReport
    runs: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        out = self.report.to_dict()
        out["runs"] = self.runs
        return out


def make_split(spec: ProtocolSpec, labels_by_level: dict[str, np.ndarray],
               seed: int) -> SplitPlan:
    if spec.task == "unsupervised":
        return unsupervised_split(labels_by_level["binary"], seed,
                                  train_fraction=spec.train_fraction,
                                  val_fraction=spec.unsup_val_fraction)
    return supervised_split(labels_by_level[spec.task], spec.task, seed,
                            quota=spec.quota, val_fraction=spec.val_fraction)


def make_job(spec: ProtocolSpec, config: TrainConfig, split: SplitPlan,
             graphs: list[FlowGraph], raw_features: np.ndarray | None,
             labels_by_level: dict[str, np.ndarray],
             prop_cache: list | None = None,
             standardizer: Standardizer | None = None) -> tuple[TrainJob, Standardizer]:
    """Assemble a TrainJob; the standardizer is fit on the split's
    training rows unless an already-fitted one is supplied."""
    y = labels_by_level[spec.task] if spec.task != "unsupervised" else None
    binary = labels_by_level["binary"]
    num_classes = None if y is None else int(y.max()) + 1
    if config.variant in GRAPH_VARIANTS:
        if standardizer is None:
            train_rows = np.vstack([graphs[i].edge_features for i in split.train])
            standardizer = standardize_fit(train_rows)
        if prop_cache is None:
            prop_cache = [propagation_matrices(g) for g in graphs]
        prepared = tuple(
            PreparedGraph(prop_cache[i], standardizer(g.edge_features))
            for i, g in enumerate(graphs)
        )
        job = TrainJob(config=config, split=split, prepared=prepared,
                       y=y, binary=binary, num_classes=num_classes)
    else:
        if standardizer is None:
            standardizer = standardize_fit(raw_features[list(split.train)])
        job = TrainJob(config=config, split=split,
                       features=standardizer(raw_features),
                       y=y, binary=binary, num_classes=num_classes)
    return job, standardizer


def _one_repeat(args) -> dict:
    spec, config, grid, seed, graphs, raw_features, labels_by_level = args
    split = make_split(spec, labels_by_level, seed)
    job, _ = make_job(spec, replace(config, seed=seed), split, graphs,
                      raw_features, labels_by_level)
    if grid is not None:
        searched = grid_search(grid, job)
        fit = searched.best_fit
        chosen = searched.best_config
    else:
        fit = train(job)
        chosen = job.config
    metrics = evaluate_metrics(replace(job, config=chosen), fit.model)
    return {
        "seed": seed,
        "value": metrics["value"],
        "metric": metrics["metric"],
        "best_epoch": fit.best_epoch,
        "val_score": fit.best_val,
        "config": chosen.to_dict(),
    }


def run_protocol(spec: ProtocolSpec, graphs: list[FlowGraph],
                 config: TrainConfig | None = None,
                 grid: dict[str, list] | None = None,
                 n_repeats: int = 30, root_seed: int = 0,
                 dataset: FlowDataset | None = None,
                 workers: int = 1) -> ProtocolResult:
    """Repeat the full pipeline on seeds root_seed .. root_seed+n-1.

    Each repeat draws a fresh split, refits the standardizer on that
    split's training rows, trains (or grid-searches) and scores the test
    split. The report aggregates mean and standard deviation.
    """
    config = config if config is not None else TrainConfig(variant=spec.variant)
    if config.variant != spec.variant:
        config = replace(config, variant=spec.variant)
    labels_by_level = {"binary": labels_at_level(graphs, "binary")}
    if spec.task in ("category", "family"):
        labels_by_level[spec.task] = labels_at_level(graphs, spec.task)
    raw_features = None
    if spec.variant in MLP_VARIANTS:
        raw_features = feature_matrix(graphs, spec.feature_set, dataset)

    seeds = [root_seed + i for i in range(n_repeats)]
    arg_list = [(spec, config, grid, seed, graphs, raw_features, labels_by_level)
                for seed in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_one_repeat, arg_list))
    else:
        runs = [_one_repeat(a) for a in arg_list]

    report = MetricReport(
        task=spec.task,
        model=spec.variant,
        metric=runs[0]["metric"],
        per_seed=[r["value"] for r in runs],
    )
    logger.info("protocol %s/%s: %.4f +/- %.4f over %d seeds",
                spec.task, spec.variant, report.mean, report.std, n_repeats)
    return ProtocolResult(report, runs)


def write_report(result: ProtocolResult, out_dir, name: str = "report") -> tuple[str, str]:
    """Write a protocol report as JSON plus a per-seed CSV export."""
    os.makedirs(out_dir, exist_ok=True)
    json_path = os.path.join(out_dir, f"{name}.json")
    csv_path = os.path.join(out_dir, f"{name}.csv")
    serialize.dump_path(result.to_dict(), json_path)
    with open(csv_path, "w", encoding="utf-8", newline="") as fp:
        writer = csv.writer(fp)
        writer.writerow(["seed", "metric", "value", "best_epoch", "val_score"])
        for run in result.runs:
            writer.writerow([
                run["seed"], run["metric"], serialize.format_float(run["value"]),
                run["best_epoch"], serialize.format_float(run["val_score"]),
            ])
    return json_path, csv_path


def mlp_baselines(spec: ProtocolSpec, graphs: list[FlowGraph],
                  dataset: FlowDataset | None = None,
                  grid: dict[str, list] | None = None,
                  config: TrainConfig | None = None,
                  n_repeats: int = 30, root_seed: int = 0,
                  workers: int = 1) -> ProtocolResult:
    """Dense baselines on the per-sample feature sets, same harness."""
    if spec.variant not in MLP_VARIANTS:
        raise ValueError("mlp_baselines only runs mlp variants")
    return run_protocol(spec, graphs, config=config, grid=grid,
                        n_repeats=n_repeats, root_seed=root_seed,
                        dataset=dataset, workers=workers)
