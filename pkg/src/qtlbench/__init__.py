"""Benchmark engine for hybrid quantum-classical transfer-learning heads."""

from .data import (
    FeatureBundle,
    SplitManifest,
    balanced_subset,
    decode_bundle,
    encode_bundle,
    load_bundle,
    save_bundle,
    split_assign,
    synthesize_features,
)
from .diffgrad import (
    GradientTape,
    finite_difference_gradient,
    observable_jacobian,
    parameter_shift_gradient,
)
from .errors import QtlBenchError
from .harness import (
    ExperimentConfig,
    OptimizerConfig,
    SweepSpec,
    load_config,
    parse_config_text,
    run_experiment,
    run_sweep,
)
from .heads import (
    HeadConfig,
    HybridModel,
    TeacherEnsembleOutput,
    build_head,
    expected_measurement_count,
    expected_quantum_params,
    head_backward,
    head_forward,
    load_checkpoint,
    save_checkpoint,
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
from .nn import (
    AdamState,
    DenseLayer,
    DistillConfig,
    adam_update,
    cross_entropy_loss,
    dense_backward,
    dense_forward,
    distillation_loss,
    step_lr,
)
from .statevector import (
    CircuitProgram,
    GateOp,
    PauliString,
    StateVector,
    amplitude_encode,
    apply_gate,
    expectation,
    init_zero,
    run_program,
)
from .verify import self_verify

__version__ = "0.1.0"

__all__ = [
    "AdamState", "AggregateReport", "CircuitProgram", "DenseLayer",
    "DistillConfig", "ExperimentConfig", "FeatureBundle", "GateOp",
    "GradientTape", "HeadConfig", "HybridModel", "OptimizerConfig",
    "PauliString", "QtlBenchError", "RunReport", "SplitManifest",
    "StateVector", "SweepSpec", "TeacherEnsembleOutput",
    "adam_update", "aggregate_runs", "amplitude_encode", "apply_gate",
    "balanced_subset", "build_head", "classification_metrics", "cost_ledger",
    "cross_entropy_loss", "decode_bundle", "dense_backward", "dense_forward",
    "distillation_loss", "encode_bundle", "expectation",
    "expected_measurement_count", "expected_quantum_params",
    "finite_difference_gradient", "head_backward", "head_forward",
    "init_zero", "load_bundle", "load_checkpoint", "load_config",
    "observable_jacobian", "parameter_shift_gradient", "parse_config_text",
    "roc_auc_ovr", "run_experiment", "run_program", "run_sweep",
    "save_bundle", "save_checkpoint", "self_verify", "split_assign",
    "step_lr", "synthesize_features", "train_edqtl_step",
]
