"""Config-driven experiment runner: seeded training runs, sweeps, reports.

One run is fully determined by (config, seed): parameter init, per-epoch
shuffles, and batch accumulation order all derive from the seed, so two
runs with the same inputs produce identical parameter trajectories and
metric fields (wall time excluded). The reported metrics come from the
epoch with the best eval accuracy, which includes the untrained model as
the epoch-zero baseline.
"""
from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .data import FeatureBundle, balanced_subset, load_bundle
from .errors import ConfigurationError, NumericFaultError, QtlBenchError
from .heads import (
    HeadConfig,
    HybridModel,
    TeacherEnsembleOutput,
    build_head,
    head_backward,
    head_forward,
    train_edqtl_step,
)
from .metrics import (
    AggregateReport,
    RunReport,
    aggregate_runs,
    classification_metrics,
    cost_ledger,
    roc_auc_ovr,
)
from .nn import AdamState, DistillConfig, adam_update, cross_entropy_loss, softmax, step_lr

THREADS_ENV_VAR = "QTLBENCH_THREADS"

SCHEDULED_FAMILIES = ("DQN", "QPIE")
WEIGHT_DECAYED_FAMILIES = ("DQN", "QPIE", "EDQTL")

DEFAULT_SEEDS = (42, 123, 600)


@dataclass(frozen=True)
class OptimizerConfig:
    lr: float = 1e-3
    weight_decay: float | None = None   # None: family default (1e-4 or 0)
    batch_size: int = 32
    max_epochs: int = 80
    scheduler: bool | None = None       # None: family default
    step_size: int = 20
    gamma: float = 0.1

    def __post_init__(self):
        if self.lr <= 0 or self.batch_size < 1 or self.max_epochs < 0:
            raise ConfigurationError("lr must be > 0, batch_size >= 1, max_epochs >= 0")
        if self.step_size < 1:
            raise ConfigurationError("step_size must be >= 1")

    def resolved_weight_decay(self, family: str) -> float:
        if self.weight_decay is not None:
            return self.weight_decay
        return 1e-4 if family in WEIGHT_DECAYED_FAMILIES else 0.0

    def resolved_scheduler(self, family: str) -> bool:
        if self.scheduler is not None:
            return self.scheduler
        return family in SCHEDULED_FAMILIES


@dataclass(frozen=True)
class ExperimentConfig:
    head: HeadConfig
    train_path: str | None = None
    eval_path: str | None = None
    optimizer: OptimizerConfig = OptimizerConfig()
    distill: DistillConfig | None = None
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    subset_total: int | None = None
    patience: int | None = 15

    def resolved_distill(self) -> DistillConfig:
        return self.distill if self.distill is not None else DistillConfig()


@dataclass(frozen=True)
class SweepSpec:
    base: ExperimentConfig
    n_qubits_axis: tuple[int, ...]
    depth_axis: tuple[int, ...]

    def __post_init__(self):
        if not self.n_qubits_axis or not self.depth_axis:
            raise ConfigurationError("sweep axes must be non-empty")

    def grid(self) -> list[tuple[int, int]]:
        """(n_qubits, depth) points in qubit-major order."""
        return [(n, d) for n in self.n_qubits_axis for d in self.depth_axis]

    def point_config(self, n_qubits: int, depth: int) -> ExperimentConfig:
        head = replace(self.base.head, n_qubits=n_qubits, depth=depth)
        return replace(self.base, head=head)

    def point_id(self, n_qubits: int, depth: int) -> str:
        head = self.base.head
        return (f"{head.family}-n{n_qubits}-d{depth}"
                + (f"-k{head.locality}" if head.family.startswith("PVCQTL") else "")
                + f"-C{head.num_classes}")


def _check_bundles(config: ExperimentConfig, train: FeatureBundle,
                   eval_bundle: FeatureBundle) -> None:
    head = config.head
    for name, b in (("train", train), ("eval", eval_bundle)):
        if b.feature_dim != head.feature_dim:
            raise ConfigurationError(
                f"{name} bundle feature_dim {b.feature_dim} != head {head.feature_dim}"
            )
        if b.num_classes != head.num_classes:
            raise ConfigurationError(
                f"{name} bundle classes {b.num_classes} != head {head.num_classes}"
            )
    if head.family == "EDQTL" and train.teacher_logits is None:
        raise ConfigurationError("EDQTL training requires teacher logits in the bundle")


def _evaluate(model: HybridModel, bundle: FeatureBundle) -> dict[str, float]:
    preds = np.empty(bundle.n_records, dtype=np.int64)
    probs = np.empty((bundle.n_records, model.config.num_classes))
    for i in range(bundle.n_records):
        logits, _ = head_forward(model, bundle.features[i])
        preds[i] = int(np.argmax(logits))
        probs[i] = softmax(logits)
    acc, prec, rec, f1 = classification_metrics(preds, bundle.labels,
                                                model.config.num_classes)
    auc = roc_auc_ovr(probs, bundle.labels, model.config.num_classes)
    return {"accuracy": acc, "precision": prec, "recall": rec, "f1": f1,
            "roc_auc": auc}


def _batch_gradients(model: HybridModel, bundle: FeatureBundle,
                     indices: np.ndarray, distill: DistillConfig | None
                     ) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean loss and gradients over one mini-batch, ascending index order."""
    total_loss = 0.0
    classical_sum = np.zeros_like(model.classical_params)
    quantum_sum = np.zeros_like(model.quantum_params)
    for i in np.sort(indices):
        features = bundle.features[i]
        label = int(bundle.labels[i])
        if distill is not None:
            teacher = TeacherEnsembleOutput(bundle.teacher_logits[i])
            loss, grads = train_edqtl_step(model, features, label, teacher, distill)
        else:
            logits, cache = head_forward(model, features)
            loss, logit_grads = cross_entropy_loss(logits, label)
            grads = head_backward(model, cache, logit_grads)
        if not np.isfinite(loss):
            raise NumericFaultError(f"non-finite loss at sample {i}")
        total_loss += loss
        classical_sum += grads.classical
        quantum_sum += grads.quantum
    scale = 1.0 / indices.size
    return total_loss * scale, classical_sum * scale, quantum_sum * scale


def run_experiment(config: ExperimentConfig, seed: int,
                   train_bundle: FeatureBundle | None = None,
                   eval_bundle: FeatureBundle | None = None) -> RunReport:
    """Train one head with one seed and report best-epoch metrics plus costs."""
    if train_bundle is None:
        if config.train_path is None:
            raise ConfigurationError("no training bundle or path provided")
        train_bundle = load_bundle(config.train_path)
    if eval_bundle is None:
        if config.eval_path is None:
            raise ConfigurationError("no eval bundle or path provided")
        eval_bundle = load_bundle(config.eval_path)
    _check_bundles(config, train_bundle, eval_bundle)
    if config.subset_total is not None:
        train_bundle = balanced_subset(train_bundle, config.subset_total, seed)

    head_cfg = replace(config.head, seed=seed)
    model = build_head(head_cfg)
    opt = config.optimizer
    family = head_cfg.family
    distill = config.resolved_distill() if family == "EDQTL" else None
    use_scheduler = opt.resolved_scheduler(family)
    adam_c = AdamState.fresh(model.classical_param_count, lr=opt.lr,
                             weight_decay=opt.resolved_weight_decay(family))
    adam_q = AdamState.fresh(model.quantum_param_count, lr=opt.lr)
    shuffle_rng = np.random.default_rng([seed, 0x5EED])

    t0 = time.perf_counter()
    best = _evaluate(model, eval_bundle)  # untrained baseline counts as a checkpoint
    epochs_since_improvement = 0
    epochs_completed = 0
    stop_reason = "budget"
    for epoch in range(opt.max_epochs):
        lr = step_lr(opt.lr, epoch, opt.step_size, opt.gamma) if use_scheduler else opt.lr
        adam_c.lr = lr
        adam_q.lr = lr
        order = shuffle_rng.permutation(train_bundle.n_records)
        for start in range(0, order.size, opt.batch_size):
            batch = order[start:start + opt.batch_size]
            _, grad_c, grad_q = _batch_gradients(model, train_bundle, batch, distill)
            new_c = adam_update(adam_c, model.classical_params, grad_c)
            new_q = (adam_update(adam_q, model.quantum_params, grad_q)
                     if model.quantum_param_count else model.quantum_params)
            model.apply_updates(classical=new_c, quantum=new_q)
        epochs_completed = epoch + 1
        scores = _evaluate(model, eval_bundle)
        if scores["accuracy"] > best["accuracy"]:
            best = scores
            epochs_since_improvement = 0
        else:
            epochs_since_improvement += 1
        if config.patience is not None and epochs_since_improvement >= config.patience:
            stop_reason = "saturation"
            break
    elapsed = time.perf_counter() - t0

    costs = cost_ledger(model, elapsed, epochs_completed, stop_reason)
    return RunReport(config_id=head_cfg.config_id, seed=seed, **best, **costs)


_BOOL_WORDS = {"true": True, "on": True, "1": True,
               "false": False, "off": False, "0": False}

_CONFIG_KEYS = {
    "data.train", "data.eval",
    "head.family", "head.n_qubits", "head.depth", "head.locality",
    "head.num_classes", "head.feature_dim", "head.hidden_dim",
    "optimizer.lr", "optimizer.weight_decay", "optimizer.batch_size",
    "optimizer.max_epochs", "optimizer.scheduler", "optimizer.step_size",
    "optimizer.gamma",
    "distill.temperature", "distill.alpha",
    "run.seeds", "run.subset_total", "run.patience",
}


def _parse_bool(key: str, raw: str) -> bool:
    try:
        return _BOOL_WORDS[raw.lower()]
    except KeyError:
        raise ConfigurationError(f"{key}={raw!r} is not a boolean")


def parse_config_text(text: str) -> ExperimentConfig:
    """Flat key=value config with dotted keys; '#' starts a comment line."""
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ConfigurationError(f"line {lineno}: expected key=value, got {line!r}")
        key, val = key.strip(), val.strip()
        if key not in _CONFIG_KEYS:
            raise ConfigurationError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigurationError(f"line {lineno}: duplicate key {key!r}")
        values[key] = val

    def _take(key, cast, default):
        if key not in values:
            return default
        raw = values.pop(key)
        try:
            return cast(raw)
        except (TypeError, ValueError):
            raise ConfigurationError(f"{key}={raw!r} is not a valid {cast.__name__}")

    for required in ("head.family", "head.n_qubits"):
        if required not in values:
            raise ConfigurationError(f"missing required key {required}")
    try:
        head = HeadConfig(
            family=values.pop("head.family").upper(),
            n_qubits=int(values.pop("head.n_qubits")),
            depth=_take("head.depth", int, 2),
            locality=_take("head.locality", int, 2),
            num_classes=_take("head.num_classes", int, 2),
            feature_dim=_take("head.feature_dim", int, 512),
            hidden_dim=_take("head.hidden_dim", int, 128),
        )
    except ValueError as exc:
        raise ConfigurationError(f"bad head configuration: {exc}")
    scheduler = (_parse_bool("optimizer.scheduler", values.pop("optimizer.scheduler"))
                 if "optimizer.scheduler" in values else None)
    optimizer = OptimizerConfig(
        lr=_take("optimizer.lr", float, 1e-3),
        weight_decay=_take("optimizer.weight_decay", float, None),
        batch_size=_take("optimizer.batch_size", int, 32),
        max_epochs=_take("optimizer.max_epochs", int, 80),
        scheduler=scheduler,
        step_size=_take("optimizer.step_size", int, 20),
        gamma=_take("optimizer.gamma", float, 0.1),
    )
    distill = None
    if "distill.temperature" in values or "distill.alpha" in values:
        distill = DistillConfig(
            temperature=_take("distill.temperature", float, 2.0),
            alpha=_take("distill.alpha", float, 0.4),
        )
    seeds = DEFAULT_SEEDS
    if "run.seeds" in values:
        raw = values.pop("run.seeds")
        try:
            seeds = tuple(int(s) for s in raw.split(",") if s.strip())
        except ValueError:
            raise ConfigurationError(f"run.seeds={raw!r} is not a comma-separated int list")
        if not seeds:
            raise ConfigurationError("run.seeds is empty")
    patience_raw = values.pop("run.patience", "15")
    try:
        patience = None if patience_raw.lower() == "none" else int(patience_raw)
    except ValueError:
        raise ConfigurationError(f"run.patience={patience_raw!r} is not an int or 'none'")
    return ExperimentConfig(
        head=head,
        train_path=values.pop("data.train", None),
        eval_path=values.pop("data.eval", None),
        optimizer=optimizer,
        distill=distill,
        seeds=seeds,
        subset_total=_take("run.subset_total", int, None),
        patience=patience,
    )


def load_config(path: str) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


@dataclass(frozen=True)
class SweepPointResult:
    config_id: str
    n_qubits: int
    depth: int
    aggregate: AggregateReport | None
    failures: tuple[tuple[int, str], ...] = ()

    @property
    def status(self) -> str:
        return "ok" if self.aggregate is not None else "failed"


def _thread_count() -> int:
    raw = os.environ.get(THREADS_ENV_VAR, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigurationError(f"{THREADS_ENV_VAR}={raw!r} is not an integer")


def run_sweep(spec: SweepSpec,
              train_bundle: FeatureBundle | None = None,
              eval_bundle: FeatureBundle | None = None) -> list[SweepPointResult]:
    """Run every (grid point x seed), aggregating surviving seeds per point."""
    points = spec.grid()
    configs: dict[int, ExperimentConfig] = {}
    config_errors: dict[int, str] = {}
    for pi, (n, d) in enumerate(points):
        try:
            configs[pi] = spec.point_config(n, d)
        except QtlBenchError as exc:
            config_errors[pi] = f"{type(exc).__name__}: {exc}"
    jobs = [(pi, seed) for pi in configs for seed in configs[pi].seeds]

    def _one(job: tuple[int, int]):
        pi, seed = job
        try:
            return pi, seed, run_experiment(configs[pi], seed, train_bundle, eval_bundle), None
        except QtlBenchError as exc:
            return pi, seed, None, f"{type(exc).__name__}: {exc}"

    workers = _thread_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_one, jobs))
    else:
        outcomes = [_one(job) for job in jobs]

    results = []
    for pi, (n, d) in enumerate(points):
        if pi in config_errors:
            failures = tuple((seed, config_errors[pi]) for seed in spec.base.seeds)
            results.append(SweepPointResult(spec.point_id(n, d), n, d, None, failures))
            continue
        reports = [r for p, _s, r, _e in outcomes if p == pi and r is not None]
        failures = tuple((s, e) for p, s, r, e in outcomes if p == pi and r is None)
        agg = aggregate_runs(reports) if reports else None
        results.append(SweepPointResult(spec.point_id(n, d), n, d, agg, failures))
    return results
