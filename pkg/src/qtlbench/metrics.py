"""Predictive metrics, seed aggregation, cost ledger, and report rendering.

Precision/recall/F1 are macro-averaged over all classes with 0/0 defined
as 0. ROC-AUC is one-vs-rest with midrank tie handling, macro-averaged
over the classes present in the labels; binary tasks reduce to the
positive-class score. Parameter totals count the trainable head only
(backbone features are inputs, not parameters).
"""
from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass

import numpy as np

from .errors import (
    AggregationError,
    DataError,
    LabelError,
    ShapeError,
    UndefinedMetricError,
)
from .heads import HybridModel

STOP_REASONS = ("budget", "saturation", "manual")

# Report note attached to families whose published parameter tallies use a
# different counting convention than the built circuit.
ANALYTIC_COUNT_NOTE = "quantum_params is the analytic count of the built circuit"

METRIC_FIELDS = ("accuracy", "precision", "recall", "f1", "roc_auc")

RUN_CSV_COLUMNS = (
    "config_id", "seed", "accuracy", "precision", "recall", "f1", "roc_auc",
    "total_params", "quantum_params", "circuit_width", "circuit_depth",
    "epochs_completed", "stop_reason", "notes", "train_time_s",
)

AGGREGATE_CSV_COLUMNS = (
    "config_id", "status", "run_count",
    "accuracy_mean", "accuracy_std", "precision_mean", "precision_std",
    "recall_mean", "recall_std", "f1_mean", "f1_std",
    "roc_auc_mean", "roc_auc_std",
    "total_params", "quantum_params", "circuit_width", "circuit_depth",
    "stop_reasons", "notes", "train_time_mean_s",
)


@dataclass(frozen=True)
class RunReport:
    config_id: str
    seed: int
    accuracy: float
    precision: float
    recall: float
    f1: float
    roc_auc: float
    total_params: int
    quantum_params: int
    circuit_width: int
    circuit_depth: int
    train_time_s: float
    epochs_completed: int
    stop_reason: str
    notes: tuple[str, ...] = ()

    def __post_init__(self):
        for name in METRIC_FIELDS:
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise DataError(f"{name}={v} outside [0, 1]")
        if self.quantum_params > self.total_params:
            raise DataError("quantum_params exceeds total_params")
        if self.stop_reason not in STOP_REASONS:
            raise DataError(f"unknown stop_reason {self.stop_reason!r}")


@dataclass(frozen=True)
class AggregateReport:
    config_id: str
    run_count: int
    means: dict[str, float]
    stds: dict[str, float]
    total_params: int
    quantum_params: int
    circuit_width: int
    circuit_depth: int
    stop_reasons: tuple[str, ...]
    notes: tuple[str, ...] = ()
    train_time_mean_s: float = 0.0


def classification_metrics(predictions, labels, num_classes: int
                           ) -> tuple[float, float, float, float]:
    """(accuracy, macro precision, macro recall, macro F1) from the confusion matrix."""
    preds = np.asarray(predictions, dtype=np.int64)
    labs = np.asarray(labels, dtype=np.int64)
    if preds.shape != labs.shape or preds.ndim != 1:
        raise ShapeError(f"prediction/label shapes differ: {preds.shape} vs {labs.shape}")
    if preds.size == 0:
        raise DataError("cannot score an empty prediction set")
    for arr, what in ((preds, "prediction"), (labs, "label")):
        if arr.min() < 0 or arr.max() >= num_classes:
            raise LabelError(f"{what} outside 0..{num_classes - 1}")
    conf = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(conf, (labs, preds), 1)
    tp = np.diag(conf).astype(float)
    pred_totals = conf.sum(axis=0).astype(float)
    true_totals = conf.sum(axis=1).astype(float)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(pred_totals > 0, tp / pred_totals, 0.0)
        recall = np.where(true_totals > 0, tp / true_totals, 0.0)
        denom = precision + recall
        f1 = np.where(denom > 0, 2.0 * precision * recall / denom, 0.0)
    accuracy = float(tp.sum() / preds.size)
    return accuracy, float(precision.mean()), float(recall.mean()), float(f1.mean())


def _binary_auc_midrank(scores: np.ndarray, positive: np.ndarray) -> float:
    """Mann-Whitney AUC with midranks for ties."""
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    uniq, inverse, counts = np.unique(scores, return_inverse=True, return_counts=True)
    ends = np.cumsum(counts)
    starts = ends - counts + 1
    midranks = (starts + ends) / 2.0
    ranks = midranks[inverse]
    rank_sum = float(ranks[positive].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def roc_auc_ovr(scores, labels, num_classes: int) -> float:
    """One-vs-rest ROC-AUC, macro over classes present in the labels."""
    probs = np.asarray(scores, dtype=float)
    labs = np.asarray(labels, dtype=np.int64)
    if probs.ndim != 2 or probs.shape != (labs.shape[0], num_classes):
        raise ShapeError(
            f"expected scores of shape ({labs.shape[0]}, {num_classes}), got {probs.shape}"
        )
    if np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-6):
        raise DataError("probability rows must sum to 1 within 1e-6")
    present = np.unique(labs)
    if present.size < 2:
        raise UndefinedMetricError("ROC-AUC needs at least two classes in the labels")
    if num_classes == 2:
        return _binary_auc_midrank(probs[:, 1], labs == 1)
    per_class = [_binary_auc_midrank(probs[:, c], labs == c) for c in present]
    return float(np.mean(per_class))


def aggregate_runs(reports: list[RunReport]) -> AggregateReport:
    """Mean and sample std (N-1) per metric across seeds of one configuration."""
    if not reports:
        raise AggregationError("no reports to aggregate")
    identity = {(r.config_id, r.total_params, r.quantum_params,
                 r.circuit_width, r.circuit_depth) for r in reports}
    if len(identity) != 1:
        raise AggregationError(f"mixed configurations: {sorted(identity)}")
    means, stds = {}, {}
    for name in METRIC_FIELDS:
        vals = np.array([getattr(r, name) for r in reports])
        means[name] = float(vals.mean())
        stds[name] = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
    first = reports[0]
    notes: tuple[str, ...] = ()
    for r in reports:
        for note in r.notes:
            if note not in notes:
                notes += (note,)
    return AggregateReport(
        first.config_id, len(reports), means, stds,
        first.total_params, first.quantum_params,
        first.circuit_width, first.circuit_depth,
        tuple(r.stop_reason for r in reports), notes,
        float(np.mean([r.train_time_s for r in reports])),
    )


def format_mean_std(agg: AggregateReport, metric: str) -> str:
    """Accuracy renders as a percentage, the rest as unit-interval values."""
    if metric == "accuracy":
        return f"{100.0 * agg.means[metric]:.2f} ± {100.0 * agg.stds[metric]:.2f}"
    return f"{agg.means[metric]:.2f} ± {agg.stds[metric]:.2f}"


def cost_ledger(model: HybridModel, timer_s: float, epochs: int,
                stop_reason: str) -> dict:
    """Cost fields of a RunReport for a built model."""
    notes: tuple[str, ...] = ()
    if model.config.family.startswith("PVCQTL"):
        notes = (ANALYTIC_COUNT_NOTE,)
    return {
        "total_params": model.total_param_count,
        "quantum_params": model.quantum_param_count,
        "circuit_width": model.config.n_qubits,
        "circuit_depth": model.config.depth,
        "train_time_s": float(timer_s),
        "epochs_completed": int(epochs),
        "stop_reason": stop_reason,
        "notes": notes,
    }


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def run_reports_csv(reports: list[RunReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RUN_CSV_COLUMNS)
    for r in reports:
        writer.writerow([
            r.config_id, r.seed,
            _fmt(r.accuracy), _fmt(r.precision), _fmt(r.recall),
            _fmt(r.f1), _fmt(r.roc_auc),
            r.total_params, r.quantum_params, r.circuit_width, r.circuit_depth,
            r.epochs_completed, r.stop_reason, ";".join(r.notes),
            _fmt(r.train_time_s),
        ])
    return buf.getvalue()


def run_reports_from_csv(text: str) -> list[RunReport]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = tuple(next(reader))
    except StopIteration:
        raise DataError("empty report CSV")
    if header != RUN_CSV_COLUMNS:
        raise DataError(f"unexpected report columns {header}")
    reports = []
    for row in reader:
        vals = dict(zip(RUN_CSV_COLUMNS, row))
        reports.append(RunReport(
            config_id=vals["config_id"], seed=int(vals["seed"]),
            accuracy=float(vals["accuracy"]), precision=float(vals["precision"]),
            recall=float(vals["recall"]), f1=float(vals["f1"]),
            roc_auc=float(vals["roc_auc"]),
            total_params=int(vals["total_params"]),
            quantum_params=int(vals["quantum_params"]),
            circuit_width=int(vals["circuit_width"]),
            circuit_depth=int(vals["circuit_depth"]),
            train_time_s=float(vals["train_time_s"]),
            epochs_completed=int(vals["epochs_completed"]),
            stop_reason=vals["stop_reason"],
            notes=tuple(n for n in vals["notes"].split(";") if n),
        ))
    return reports


def aggregates_csv(rows: list[tuple[str, AggregateReport | None, str]]) -> str:
    """Rows are (config_id, aggregate or None, status)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(AGGREGATE_CSV_COLUMNS)
    for config_id, agg, status in rows:
        if agg is None:
            writer.writerow([config_id, status] + [""] * (len(AGGREGATE_CSV_COLUMNS) - 2))
            continue
        writer.writerow([
            config_id, status, agg.run_count,
            _fmt(agg.means["accuracy"]), _fmt(agg.stds["accuracy"]),
            _fmt(agg.means["precision"]), _fmt(agg.stds["precision"]),
            _fmt(agg.means["recall"]), _fmt(agg.stds["recall"]),
            _fmt(agg.means["f1"]), _fmt(agg.stds["f1"]),
            _fmt(agg.means["roc_auc"]), _fmt(agg.stds["roc_auc"]),
            agg.total_params, agg.quantum_params,
            agg.circuit_width, agg.circuit_depth,
            ";".join(agg.stop_reasons), ";".join(agg.notes),
            _fmt(agg.train_time_mean_s),
        ])
    return buf.getvalue()


def aggregates_table(rows: list[tuple[str, AggregateReport | None, str]]) -> str:
    """Aligned plain-text rendering of aggregate rows."""
    header = ["config", "runs", "accuracy(%)", "precision", "recall", "f1",
              "roc_auc", "params", "q_params", "width", "depth"]
    body = []
    for config_id, agg, status in rows:
        if agg is None:
            body.append([config_id, status] + ["-"] * (len(header) - 2))
            continue
        body.append([
            config_id, str(agg.run_count),
            format_mean_std(agg, "accuracy"), format_mean_std(agg, "precision"),
            format_mean_std(agg, "recall"), format_mean_std(agg, "f1"),
            format_mean_std(agg, "roc_auc"),
            str(agg.total_params), str(agg.quantum_params),
            str(agg.circuit_width), str(agg.circuit_depth),
        ])
    widths = [max(len(header[i]), *(len(row[i]) for row in body)) if body else len(header[i])
              for i in range(len(header))]
    lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(header))]
    for row in body:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)))
    return "\n".join(lines) + "\n"


def write_text_atomic(text: str, path: str) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)
