"""Repeated random-split evaluation with confusion-matrix aggregation.

The protocol: for each of the configured iterations, stratify-split the
data (default 60/40), train a forest on the train half, score the test
half, and record the confusion matrix, derived metrics, and feature
importances. Metrics and confusion cells aggregate as mean and sample
standard deviation; importances aggregate as the per-feature median.

Splits are made per swallow, not per subject; a subject's swallows can
land on both sides of a split, so scores may be optimistic when samples
from the same subject are correlated.

The dysphagic class is positive throughout.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ParameterError, ShapeError, StratificationError, TrainingError
from .forest import (
    ForestParams,
    LabeledDataset,
    feature_importance,
    predict_batch,
    train_forest,
)
from .ioutil import atomic_write_text
from .seeding import derive_rng, derive_seed

METRIC_NAMES = ("precision", "sensitivity", "specificity", "accuracy", "f1")
CONFUSION_CELLS = ("tp", "fp", "fn", "tn")

SUMMARY_ATTRIBUTES = (
    ("True Positives", "tp", False),
    ("False Positives", "fp", False),
    ("False Negatives", "fn", False),
    ("True Negatives", "tn", False),
    ("Precision (%)", "precision", True),
    ("Sensitivity (%)", "sensitivity", True),
    ("Specificity (%)", "specificity", True),
    ("Accuracy (%)", "accuracy", True),
    ("F1 Score (%)", "f1", True),
)


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ParameterError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def as_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}


@dataclass(frozen=True)
class Metrics:
    precision: float
    sensitivity: float
    specificity: float
    accuracy: float
    f1: float

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in METRIC_NAMES}


def stratified_split(
    data: LabeledDataset, train_fraction: float, rng: np.random.Generator
) -> tuple[LabeledDataset, LabeledDataset]:
    """Per-class shuffle and split; train count is round(class size * fraction)."""
    if not 0.0 < train_fraction < 1.0:
        raise ParameterError("train_fraction must lie strictly between 0 and 1")
    train_idx = []
    test_idx = []
    for cls in (0, 1):
        members = np.flatnonzero(data.y == cls)
        if members.size < 2:
            raise StratificationError(
                f"class {cls} has {members.size} members; need at least 2"
            )
        n_train = round(members.size * train_fraction)
        if n_train == 0 or n_train == members.size:
            raise StratificationError(
                f"class {cls} would not appear in both halves at fraction {train_fraction}"
            )
        shuffled = rng.permutation(members)
        train_idx.append(shuffled[:n_train])
        test_idx.append(shuffled[n_train:])
    return (
        data.subset(np.concatenate(train_idx)),
        data.subset(np.concatenate(test_idx)),
    )


def confusion(predictions, truth) -> ConfusionMatrix:
    """Standard counts with dysphagic (1) as the positive class."""
    p = np.asarray(predictions)
    t = np.asarray(truth)
    if p.shape != t.shape:
        raise ShapeError(f"predictions {p.shape} vs truth {t.shape}")
    return ConfusionMatrix(
        tp=int(np.count_nonzero((p == 1) & (t == 1))),
        fp=int(np.count_nonzero((p == 1) & (t == 0))),
        fn=int(np.count_nonzero((p == 0) & (t == 1))),
        tn=int(np.count_nonzero((p == 0) & (t == 0))),
    )


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def metrics(cm: ConfusionMatrix) -> Metrics:
    """Precision, sensitivity, specificity, accuracy, F1; any 0/0 is 0."""
    if cm.total == 0:
        raise ParameterError("metrics need at least one prediction")
    precision = _ratio(cm.tp, cm.tp + cm.fp)
    sensitivity = _ratio(cm.tp, cm.tp + cm.fn)
    specificity = _ratio(cm.tn, cm.tn + cm.fp)
    accuracy = (cm.tp + cm.tn) / cm.total
    f1 = (
        2.0 * precision * sensitivity / (precision + sensitivity)
        if precision + sensitivity > 0
        else 0.0
    )
    return Metrics(precision, sensitivity, specificity, accuracy, f1)


@dataclass(frozen=True)
class EvalConfig:
    iterations: int = 11
    train_fraction: float = 0.6
    forest: ForestParams = field(default_factory=ForestParams)
    seed: int = 42

    def __post_init__(self):
        if self.iterations < 1:
            raise ParameterError("iterations must be >= 1")


@dataclass(frozen=True, eq=False)
class IterationResult:
    confusion: ConfusionMatrix
    metrics: Metrics
    importance: np.ndarray


@dataclass(frozen=True, eq=False)
class EvaluationReport:
    """Per-iteration records plus mean/SD aggregates and median importances."""

    config: EvalConfig
    iterations: list[IterationResult]
    metric_mean_sd: dict[str, tuple[float, float]]
    confusion_mean_sd: dict[str, tuple[float, float]]
    importance_median: np.ndarray

    def to_dict(self) -> dict:
        forest = self.config.forest
        return {
            "config": {
                "iterations": self.config.iterations,
                "train_fraction": self.config.train_fraction,
                "seed": self.config.seed,
                "forest": {
                    "n_trees": forest.n_trees,
                    "max_features": forest.max_features,
                    "min_samples_leaf": forest.min_samples_leaf,
                    "max_depth": forest.max_depth,
                    "bootstrap": forest.bootstrap,
                },
            },
            "iterations": [
                {
                    "confusion": it.confusion.as_dict(),
                    "metrics": it.metrics.as_dict(),
                    "importance": [float(v) for v in it.importance],
                }
                for it in self.iterations
            ],
            "aggregate": {
                name: {"mean": m, "sd": s}
                for name, (m, s) in self.metric_mean_sd.items()
            },
            "confusion_mean_sd": {
                cell: {"mean": m, "sd": s}
                for cell, (m, s) in self.confusion_mean_sd.items()
            },
            "importance_median": [float(v) for v in self.importance_median],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    def write_json(self, path) -> Path:
        return atomic_write_text(path, self.to_json() + "\n")

    def summary_rows(self) -> list[tuple[str, float, float]]:
        return summary_rows_from_dict(self.to_dict())

    def format_summary(self) -> str:
        return format_summary_rows(self.summary_rows())

    def write_summary_csv(self, path) -> Path:
        lines = ["attribute,mean,sd"]
        for name, mean, sd in self.summary_rows():
            lines.append(f"{name},{mean:.9g},{sd:.9g}")
        return atomic_write_text(path, "\n".join(lines) + "\n")


def summary_rows_from_dict(report: dict) -> list[tuple[str, float, float]]:
    """The nine summary attributes (counts then percentages) of a report dict."""
    rows = []
    for name, key, is_metric in SUMMARY_ATTRIBUTES:
        if is_metric:
            cell = report["aggregate"][key]
            rows.append((name, 100.0 * cell["mean"], 100.0 * cell["sd"]))
        else:
            cell = report["confusion_mean_sd"][key]
            rows.append((name, cell["mean"], cell["sd"]))
    return rows


def format_summary_rows(rows: list[tuple[str, float, float]]) -> str:
    width = max(len(name) for name, _, _ in rows)
    lines = [f"{'Attribute':<{width}}  Dysphagic swallows (mean +/- SD)"]
    for name, mean, sd in rows:
        lines.append(f"{name:<{width}}  {mean:.1f} +/- {sd:.1f}")
    return "\n".join(lines)


def _mean_sd(values: np.ndarray) -> tuple[float, float]:
    values = np.asarray(values, dtype=np.float64)
    mean = float(values.mean())
    sd = float(values.std(ddof=1)) if values.size > 1 else 0.0
    return mean, sd


def _run_iteration(data: LabeledDataset, config: EvalConfig, i: int) -> IterationResult:
    try:
        split_rng = derive_rng(config.seed, i, 0)
        train, test = stratified_split(data, config.train_fraction, split_rng)
        forest_params = replace(config.forest, seed=derive_seed(config.seed, i, 1))
        forest = train_forest(train, forest_params)
    except (StratificationError, TrainingError) as exc:
        raise type(exc)(f"iteration {i}: {exc}") from exc
    predictions, _ = predict_batch(forest, test.X)
    cm = confusion(predictions, test.y)
    return IterationResult(cm, metrics(cm), feature_importance(forest))


def repeated_evaluation(
    data: LabeledDataset, config: EvalConfig = EvalConfig(), n_jobs: int = 1
) -> EvaluationReport:
    """Run the repeated-split protocol; bit-identical for a given config.

    Iteration i derives its split generator from (seed, i, 0) and its
    forest seed from (seed, i, 1), so the report does not depend on
    execution order or on n_jobs.
    """
    if n_jobs == 1:
        results = [_run_iteration(data, config, i) for i in range(config.iterations)]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(
                pool.map(lambda i: _run_iteration(data, config, i), range(config.iterations))
            )

    metric_mean_sd = {
        name: _mean_sd([getattr(r.metrics, name) for r in results])
        for name in METRIC_NAMES
    }
    confusion_mean_sd = {
        cell: _mean_sd([getattr(r.confusion, cell) for r in results])
        for cell in CONFUSION_CELLS
    }
    importance_median = np.median(np.stack([r.importance for r in results]), axis=0)
    return EvaluationReport(
        config, results, metric_mean_sd, confusion_mean_sd, importance_median
    )
