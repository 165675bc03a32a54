"""Built-in oracle suite: release-gate checks runnable from the CLI.

The dense-matrix oracle here is built from Kronecker products and explicit
permutation matrices, deliberately sharing no code with the tensor-reshape
path in the simulator.
"""
from __future__ import annotations

import math
from itertools import combinations

import numpy as np

from .diffgrad import finite_difference_gradient, parameter_shift_gradient
from .heads import (
    FAMILIES,
    HeadConfig,
    build_head,
    expected_measurement_count,
    expected_quantum_params,
)
from .metrics import classification_metrics, roc_auc_ovr
from .statevector import (
    CircuitProgram,
    GateOp,
    PauliString,
    StateVector,
    init_zero,
    rotation_matrix,
    run_program,
)


def dense_unitary(program: CircuitProgram, params: np.ndarray) -> np.ndarray:
    """Full 2^n x 2^n matrix of the program, built gate by gate."""
    n = program.n_qubits
    dim = 1 << n
    total = np.eye(dim, dtype=complex)
    for op in program.ops:
        if op.kind in ("RX", "RY", "RZ"):
            angle = op.angle if op.param_slot is None else float(params[op.param_slot])
            mat = rotation_matrix(op.kind, angle)
            gate = np.kron(np.kron(np.eye(1 << op.targets[0]), mat),
                           np.eye(1 << (n - op.targets[0] - 1)))
        elif op.kind == "H":
            mat = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
            gate = np.kron(np.kron(np.eye(1 << op.targets[0]), mat),
                           np.eye(1 << (n - op.targets[0] - 1)))
        elif op.kind == "CNOT":
            c, t = op.targets
            gate = np.zeros((dim, dim), dtype=complex)
            for i in range(dim):
                if (i >> (n - 1 - c)) & 1:
                    gate[i ^ (1 << (n - 1 - t)), i] = 1.0
                else:
                    gate[i, i] = 1.0
        else:  # CZ
            a, b = op.targets
            diag = np.ones(dim, dtype=complex)
            for i in range(dim):
                if ((i >> (n - 1 - a)) & 1) and ((i >> (n - 1 - b)) & 1):
                    diag[i] = -1.0
            gate = np.diag(diag)
        total = gate @ total
    return total


def dense_expectation(state: StateVector, observable: PauliString) -> float:
    """Quadratic form against the explicit observable matrix."""
    z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
    mat = np.eye(1, dtype=complex)
    for letter in observable.letters:
        mat = np.kron(mat, z if letter == "Z" else np.eye(2, dtype=complex))
    psi = state.amplitudes
    return float(np.real(psi.conj() @ mat @ psi))


def random_program(rng: np.random.Generator, n_qubits: int,
                   n_gates: int) -> tuple[CircuitProgram, np.ndarray]:
    """Random gate sequence; every rotation gets its own parameter slot."""
    ops = []
    slot = 0
    kinds = ["RX", "RY", "RZ", "H", "CNOT", "CZ"] if n_qubits >= 2 else ["RX", "RY", "RZ", "H"]
    for _ in range(n_gates):
        kind = kinds[rng.integers(len(kinds))]
        if kind in ("CNOT", "CZ"):
            a, b = rng.choice(n_qubits, size=2, replace=False)
            ops.append(GateOp(kind, (int(a), int(b))))
        elif kind == "H":
            ops.append(GateOp("H", (int(rng.integers(n_qubits)),)))
        else:
            ops.append(GateOp(kind, (int(rng.integers(n_qubits)),), param_slot=slot))
            slot += 1
    params = rng.uniform(-math.pi, math.pi, size=slot)
    return CircuitProgram(n_qubits, tuple(ops), slot), params


def _check_simulator_oracle(rng: np.random.Generator) -> tuple[bool, str]:
    worst = 0.0
    for _ in range(40):
        n = int(rng.integers(1, 5))
        program, params = random_program(rng, n, int(rng.integers(5, 25)))
        got = run_program(program, params, init_zero(n)).amplitudes
        want = dense_unitary(program, params) @ init_zero(n).amplitudes
        worst = max(worst, float(np.max(np.abs(got - want))))
    ok = worst <= 1e-10
    return ok, f"max amplitude deviation {worst:.3e}"


def _check_norm_drift(rng: np.random.Generator) -> tuple[bool, str]:
    program, params = random_program(rng, 10, 200)
    out = run_program(program, params, init_zero(10))
    drift = abs(out.norm_sq() - 1.0)
    return drift <= 1e-10, f"norm drift {drift:.3e}"


def _check_gradients(rng: np.random.Generator, grad_fn) -> tuple[bool, str]:
    # tolerance: relative 1e-5, with a 1e-7 absolute floor near zero
    worst = 0.0
    for _ in range(10):
        n = int(rng.integers(2, 5))
        program, params = random_program(rng, n, int(rng.integers(8, 20)))
        if program.param_count == 0:
            continue
        obs = PauliString.z_on(n, int(rng.integers(n)))
        ps = grad_fn(program, params, init_zero(n), obs)
        fd = finite_difference_gradient(program, params, init_zero(n), obs, 1e-4)
        allowed = np.maximum(1e-5 * np.maximum(np.abs(ps), np.abs(fd)), 1e-7)
        ratio = np.abs(ps - fd) / allowed
        worst = max(worst, float(ratio.max()) if ratio.size else 0.0)
    return worst <= 1.0, f"worst deviation at {worst:.3f}x the tolerance"


def _check_parameter_counts() -> tuple[bool, str]:
    for family in FAMILIES:
        for n in range(2, 10):
            for d in range(0, 4):
                feature_dim = (1 << n) if family == "AECQTL" else 24
                cfg = HeadConfig(family, n, depth=d, locality=min(2, n),
                                 num_classes=2, feature_dim=feature_dim, hidden_dim=8)
                model = build_head(cfg)
                if model.quantum_param_count != expected_quantum_params(cfg):
                    return False, f"{cfg.config_id}: {model.quantum_param_count} angles"
                if len(model.measurement_plan) != expected_measurement_count(cfg):
                    return False, f"{cfg.config_id}: plan {len(model.measurement_plan)}"
    return True, "all family formulas hold"


def _check_plan_cardinality() -> tuple[bool, str]:
    for n in range(2, 10):
        for k in range(1, min(3, n) + 1):
            cfg = HeadConfig("PVCQTL_M", n, locality=k, feature_dim=16, hidden_dim=4)
            model = build_head(cfg)
            enumerated = [s for w in range(1, k + 1) for s in combinations(range(n), w)]
            if len(model.measurement_plan) != len(enumerated):
                return False, f"n={n} k={k}: {len(model.measurement_plan)} observables"
            for obs, subset in zip(model.measurement_plan, enumerated):
                if obs.support != subset:
                    return False, f"n={n} k={k}: order mismatch at {subset}"
    return True, "subset enumeration matches"


def _check_metric_oracles(rng: np.random.Generator) -> tuple[bool, str]:
    for _ in range(200):
        c = int(rng.integers(2, 5))
        size = int(rng.integers(2, 40))
        labels = rng.integers(c, size=size)
        if np.unique(labels).size < 2:
            continue
        preds = rng.integers(c, size=size)
        got = classification_metrics(preds, labels, c)
        want = _counting_metrics(preds, labels, c)
        if not np.allclose(got, want, atol=0.0):
            return False, f"metrics mismatch: {got} vs {want}"
        probs = rng.dirichlet(np.ones(c), size=size)
        got_auc = roc_auc_ovr(probs, labels, c)
        want_auc = _all_pairs_auc(probs, labels, c)
        if abs(got_auc - want_auc) > 1e-12:
            return False, f"auc mismatch: {got_auc} vs {want_auc}"
    return True, "metrics match counting oracles"


def _counting_metrics(preds, labels, num_classes):
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    accuracy = float(np.mean(preds == labels))
    precs, recs, f1s = [], [], []
    for cls in range(num_classes):
        tp = int(np.sum((preds == cls) & (labels == cls)))
        fp = int(np.sum((preds == cls) & (labels != cls)))
        fn = int(np.sum((preds != cls) & (labels == cls)))
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        precs.append(p)
        recs.append(r)
        f1s.append(f)
    return accuracy, float(np.mean(precs)), float(np.mean(recs)), float(np.mean(f1s))


def _all_pairs_auc(probs, labels, num_classes):
    labels = np.asarray(labels)
    present = np.unique(labels)
    classes = [1] if num_classes == 2 else list(present)
    aucs = []
    for cls in classes:
        pos = np.flatnonzero(labels == cls)
        neg = np.flatnonzero(labels != cls)
        score = 0.0
        for i in pos:
            for j in neg:
                if probs[i, cls] > probs[j, cls]:
                    score += 1.0
                elif probs[i, cls] == probs[j, cls]:
                    score += 0.5
        aucs.append(score / (len(pos) * len(neg)))
    return float(np.mean(aucs))


def self_verify(grad_fn=None) -> tuple[bool, list[str]]:
    """Run every release-gate check; returns (all passed, report lines)."""
    grad_fn = grad_fn or parameter_shift_gradient
    checks = [
        ("simulator-dense-oracle", lambda: _check_simulator_oracle(np.random.default_rng(7))),
        ("norm-drift-200-gates", lambda: _check_norm_drift(np.random.default_rng(11))),
        ("parameter-shift-vs-fd", lambda: _check_gradients(np.random.default_rng(13), grad_fn)),
        ("parameter-count-formulas", _check_parameter_counts),
        ("measurement-plan-cardinality", _check_plan_cardinality),
        ("metric-oracles", lambda: _check_metric_oracles(np.random.default_rng(17))),
    ]
    lines = []
    all_ok = True
    for name, fn in checks:
        ok, detail = fn()
        all_ok &= ok
        lines.append(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return all_ok, lines
