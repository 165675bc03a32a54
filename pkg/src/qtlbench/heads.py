"""Builders and forward/backward execution for the hybrid head families.

Every head is the same pipeline: optional classical pre-network, feature
encoding into a parameterized circuit, Pauli-Z readout of a measurement
plan, and a classical linear readout. Families differ in the encoding
(single-axis angles, per-qubit angle triples, or amplitudes), the ansatz,
and the measurement plan (per-qubit Z or all Z-strings up to a locality
bound).

Circuit parameter slots are laid out encoding-first: slots [0, n_enc) are
populated from the pre-network output (scaled by tanh * pi/2) at forward
time, slots [n_enc, n_enc + n_ansatz) hold the trainable quantum angles.
"""
from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .diffgrad import GradientTape, observable_jacobian
from .errors import (
    ConfigurationError,
    CorruptionError,
    DataError,
    FormatError,
    InvalidCacheError,
    ShapeError,
)
from .nn import DenseLayer, dense_backward, dense_forward, distillation_loss, DistillConfig
from .statevector import (
    CircuitProgram,
    GateOp,
    MAX_QUBITS,
    PauliString,
    StateVector,
    amplitude_encode,
    expectation,
    init_zero,
    run_program,
)

FAMILIES = ("DQN", "QPIE", "AECQTL", "PVCQTL_M", "PVCQTL_V", "EDQTL")
ANGLE_ENCODED_FAMILIES = ("DQN", "QPIE", "PVCQTL_M", "PVCQTL_V", "EDQTL")

# Encoded angles span (-pi/2, pi/2): tanh output scaled by this constant.
ENCODING_ANGLE_SCALE = math.pi / 2.0


@dataclass(frozen=True)
class HeadConfig:
    family: str
    n_qubits: int
    depth: int = 2
    locality: int = 2
    num_classes: int = 2
    feature_dim: int = 512
    hidden_dim: int = 128
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown family {self.family!r}")
        if not 1 <= self.n_qubits <= MAX_QUBITS:
            raise ConfigurationError(f"n_qubits {self.n_qubits} outside 1..{MAX_QUBITS}")
        if self.depth < 0:
            raise ConfigurationError(f"depth must be >= 0, got {self.depth}")
        if self.num_classes < 2:
            raise ConfigurationError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.feature_dim < 1 or self.hidden_dim < 1:
            raise ConfigurationError("feature_dim and hidden_dim must be positive")
        if self.family == "AECQTL" and (1 << self.n_qubits) != self.feature_dim:
            raise ConfigurationError(
                f"AECQTL needs 2^n_qubits == feature_dim, got 2^{self.n_qubits} "
                f"!= {self.feature_dim}"
            )
        if self.family.startswith("PVCQTL") and not 1 <= self.locality <= self.n_qubits:
            raise ConfigurationError(
                f"locality {self.locality} outside 1..{self.n_qubits}"
            )

    @property
    def config_id(self) -> str:
        return (f"{self.family}-n{self.n_qubits}-d{self.depth}"
                + (f"-k{self.locality}" if self.family.startswith("PVCQTL") else "")
                + f"-C{self.num_classes}")


def expected_quantum_params(config: HeadConfig) -> int:
    """Analytic trainable-angle count per family."""
    n, d = config.n_qubits, config.depth
    if config.family in ("DQN", "QPIE", "EDQTL"):
        return 3 * n * d
    if config.family == "AECQTL":
        return 3 * n * (d + 1)
    if config.family == "PVCQTL_M":
        return 0
    return 3 * n  # PVCQTL_V


def expected_measurement_count(config: HeadConfig) -> int:
    """Measurement-plan length: n for Z-readout, sum of C(n, j) for locality heads."""
    if config.family.startswith("PVCQTL"):
        return sum(math.comb(config.n_qubits, j) for j in range(1, config.locality + 1))
    return config.n_qubits


def _cnot_ring(n: int) -> list[GateOp]:
    if n < 2:
        return []
    return [GateOp("CNOT", (i, (i + 1) % n)) for i in range(n)]


def _cz_ring(n: int) -> list[GateOp]:
    if n < 2:
        return []
    return [GateOp("CZ", (i, (i + 1) % n)) for i in range(n)]


def _rotation_triple_layer(n: int, slot_start: int) -> list[GateOp]:
    """RX, RY, RZ on each qubit, qubit-major, consuming 3n consecutive slots."""
    ops = []
    slot = slot_start
    for q in range(n):
        for kind in ("RX", "RY", "RZ"):
            ops.append(GateOp(kind, (q,), param_slot=slot))
            slot += 1
    return ops


def _z_weight_plan(n: int, max_weight: int) -> tuple[PauliString, ...]:
    """All Z-strings of weight 1..max_weight, by weight then subset order."""
    plan = []
    for w in range(1, max_weight + 1):
        for subset in combinations(range(n), w):
            plan.append(PauliString.z_on(n, *subset))
    return tuple(plan)


@dataclass
class HybridModel:
    config: HeadConfig
    pre_net: tuple[DenseLayer, ...]
    circuit: CircuitProgram
    encoding_slot_count: int
    measurement_plan: tuple[PauliString, ...]
    readout: tuple[DenseLayer, ...]
    classical_params: np.ndarray
    quantum_params: np.ndarray
    _param_version: int = 0

    @property
    def ansatz_slot_count(self) -> int:
        return self.circuit.param_count - self.encoding_slot_count

    @property
    def classical_param_count(self) -> int:
        return int(self.classical_params.size)

    @property
    def quantum_param_count(self) -> int:
        return int(self.quantum_params.size)

    @property
    def total_param_count(self) -> int:
        return self.classical_param_count + self.quantum_param_count

    def apply_updates(self, classical: np.ndarray | None = None,
                      quantum: np.ndarray | None = None) -> None:
        """Overwrite parameter vectors in place; layer views track the change."""
        if classical is not None:
            if classical.shape != self.classical_params.shape:
                raise ShapeError("classical parameter vector has the wrong length")
            self.classical_params[:] = classical
        if quantum is not None:
            if quantum.shape != self.quantum_params.shape:
                raise ShapeError("quantum parameter vector has the wrong length")
            self.quantum_params[:] = quantum
        self._param_version += 1


def _layer_specs(config: HeadConfig) -> tuple[list[tuple[int, int, str]],
                                              list[tuple[int, int, str]]]:
    """(pre_net specs, readout specs) as (in_dim, out_dim, activation) triples."""
    n, c = config.n_qubits, config.num_classes
    m = expected_measurement_count(config)
    if config.family == "AECQTL":
        return [], [(m, c, "none")]
    enc_width = 3 * n if config.family == "QPIE" else n
    pre = [(config.feature_dim, config.hidden_dim, "relu"),
           (config.hidden_dim, enc_width, "tanh")]
    return pre, [(m, c, "none")]


def _build_circuit(config: HeadConfig) -> tuple[CircuitProgram, int]:
    """Family circuit plus its count of encoding slots."""
    n, d = config.n_qubits, config.depth
    ops: list[GateOp] = []
    if config.family in ("DQN", "EDQTL"):
        enc = n
        ops += [GateOp("RY", (q,), param_slot=q) for q in range(n)]
        slot = enc
        for _ in range(d):
            ops += _rotation_triple_layer(n, slot)
            slot += 3 * n
            ops += _cnot_ring(n)
    elif config.family == "QPIE":
        enc = 3 * n
        ops += _rotation_triple_layer(n, 0)
        slot = enc
        for _ in range(d):
            ops += _rotation_triple_layer(n, slot)
            slot += 3 * n
            ops += _cnot_ring(n)
    elif config.family == "AECQTL":
        enc = 0
        slot = 0
        for _ in range(d):
            ops += [GateOp("H", (q,)) for q in range(n)]
            ops += _rotation_triple_layer(n, slot)
            slot += 3 * n
            ops += _cnot_ring(n)
        ops += _rotation_triple_layer(n, slot)
        slot += 3 * n
    elif config.family == "PVCQTL_M":
        enc = n
        ops += [GateOp("RY", (q,), param_slot=q) for q in range(n)]
        ops += _cz_ring(n)
        slot = enc
    else:  # PVCQTL_V
        enc = n
        ops += [GateOp("RY", (q,), param_slot=q) for q in range(n)]
        ops += _cz_ring(n)
        ops += _rotation_triple_layer(n, enc)
        ops += _cz_ring(n)
        slot = enc + 3 * n
    return CircuitProgram(n, tuple(ops), slot), enc


def build_head(config: HeadConfig) -> HybridModel:
    """Instantiate one head family with seeded parameter initialization.

    Classical weights and biases are uniform +-1/sqrt(fan_in); quantum angles
    are uniform in [-pi, pi]. Draw order is fixed: pre-network layers in
    order, readout, then quantum angles.
    """
    circuit, enc_count = _build_circuit(config)
    pre_specs, read_specs = _layer_specs(config)
    rng = np.random.default_rng(config.seed)
    chunks: list[np.ndarray] = []
    for in_dim, out_dim, _act in pre_specs + read_specs:
        bound = 1.0 / math.sqrt(in_dim)
        chunks.append(rng.uniform(-bound, bound, size=out_dim * in_dim))
        chunks.append(rng.uniform(-bound, bound, size=out_dim))
    classical = np.concatenate(chunks) if chunks else np.zeros(0)
    n_ansatz = circuit.param_count - enc_count
    quantum = rng.uniform(-math.pi, math.pi, size=n_ansatz)
    pre_net, readout = _layers_from_flat(classical, pre_specs, read_specs)
    plan = (_z_weight_plan(config.n_qubits, config.locality)
            if config.family.startswith("PVCQTL")
            else tuple(PauliString.z_on(config.n_qubits, q)
                       for q in range(config.n_qubits)))
    model = HybridModel(config, pre_net, circuit, enc_count, plan, readout,
                        classical, quantum)
    assert model.quantum_param_count == expected_quantum_params(config)
    assert len(plan) == expected_measurement_count(config)
    return model


def _layers_from_flat(flat: np.ndarray, pre_specs, read_specs):
    """Materialize layers as views into the flat classical parameter vector."""
    offset = 0
    layers: list[DenseLayer] = []
    for in_dim, out_dim, act in pre_specs + read_specs:
        w = flat[offset:offset + out_dim * in_dim].reshape(out_dim, in_dim)
        offset += out_dim * in_dim
        b = flat[offset:offset + out_dim]
        offset += out_dim
        layers.append(DenseLayer(w, b, act))
    n_pre = len(pre_specs)
    return tuple(layers[:n_pre]), tuple(layers[n_pre:])


@dataclass(frozen=True)
class ForwardCache:
    """Intermediate values head_backward needs; tied to one parameter version."""

    features: np.ndarray
    pre_inputs: tuple[np.ndarray, ...]
    encoding_angles: np.ndarray
    circuit_params: np.ndarray
    input_state: StateVector
    final_state: StateVector
    z: np.ndarray
    param_version: int


def head_forward(model: HybridModel, features: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Features -> logits, returning the cache required for backward."""
    features = np.asarray(features, dtype=float)
    if features.shape != (model.config.feature_dim,):
        raise ShapeError(
            f"expected {model.config.feature_dim} features, got shape {features.shape}"
        )
    if model.pre_net:
        pre_inputs = []
        h = features
        for layer in model.pre_net:
            pre_inputs.append(h)
            h = dense_forward(layer, h)
        enc_angles = ENCODING_ANGLE_SCALE * h
        input_state = init_zero(model.config.n_qubits)
        circuit_params = np.concatenate([enc_angles, model.quantum_params])
        pre_inputs = tuple(pre_inputs)
    else:
        pre_inputs = ()
        enc_angles = np.zeros(0)
        input_state = amplitude_encode(features)
        circuit_params = model.quantum_params.copy()
    state = run_program(model.circuit, circuit_params, input_state)
    z = np.array([expectation(state, obs) for obs in model.measurement_plan])
    logits = dense_forward(model.readout[0], z)
    cache = ForwardCache(features, pre_inputs, enc_angles, circuit_params,
                         input_state, state, z, model._param_version)
    return logits, cache


@dataclass(frozen=True)
class HeadGradients:
    """Gradients of one scalar loss with respect to every trainable parameter."""

    tape: GradientTape
    classical: np.ndarray
    quantum: np.ndarray


def head_backward(model: HybridModel, cache: ForwardCache,
                  logit_grads: np.ndarray) -> HeadGradients:
    """Chain rule from logit gradients back to classical and quantum params."""
    if cache.param_version != model._param_version:
        raise InvalidCacheError("cache predates a parameter update; rerun forward")
    logit_grads = np.asarray(logit_grads, dtype=float)
    if logit_grads.shape != (model.config.num_classes,):
        raise ShapeError(
            f"expected {model.config.num_classes} logit grads, got {logit_grads.shape}"
        )
    dw_r, db_r, dz = dense_backward(model.readout[0], cache.z, logit_grads)
    jac = observable_jacobian(model.circuit, cache.circuit_params,
                              cache.input_state, list(model.measurement_plan))
    slot_grads = jac.T @ dz
    tape = GradientTape(slot_grads, jac)
    n_enc = model.encoding_slot_count
    quantum_grads = slot_grads[n_enc:]
    pieces: list[np.ndarray] = []
    if model.pre_net:
        upstream = ENCODING_ANGLE_SCALE * slot_grads[:n_enc]
        layer_grads: list[tuple[np.ndarray, np.ndarray]] = []
        for layer, inp in zip(reversed(model.pre_net), reversed(cache.pre_inputs)):
            dw, db, upstream = dense_backward(layer, inp, upstream)
            layer_grads.append((dw, db))
        for dw, db in reversed(layer_grads):
            pieces.append(dw.ravel())
            pieces.append(db)
    pieces.append(dw_r.ravel())
    pieces.append(db_r)
    classical_grads = np.concatenate(pieces)
    return HeadGradients(tape, classical_grads, quantum_grads)


@dataclass(frozen=True)
class TeacherEnsembleOutput:
    """Per-sample averaged teacher logits used as distillation soft targets."""

    logits: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.logits, dtype=float)
        if arr.ndim != 1:
            raise ShapeError(f"teacher logits must be a vector, got shape {arr.shape}")
        object.__setattr__(self, "logits", arr)

    @classmethod
    def from_teachers(cls, teacher_logits: list[np.ndarray]) -> "TeacherEnsembleOutput":
        if not teacher_logits:
            raise DataError("teacher ensemble is empty")
        stacked = np.stack([np.asarray(t, dtype=float) for t in teacher_logits])
        return cls(stacked.mean(axis=0))


def train_edqtl_step(model: HybridModel, features: np.ndarray, label: int,
                     teacher: TeacherEnsembleOutput,
                     cfg: DistillConfig) -> tuple[float, HeadGradients]:
    """One distillation step: forward, blended loss, full backward."""
    if teacher is None or teacher.logits is None:
        raise DataError("distillation step requires teacher logits")
    if teacher.logits.shape != (model.config.num_classes,):
        raise ShapeError(
            f"teacher logits length {teacher.logits.shape} != {model.config.num_classes}"
        )
    logits, cache = head_forward(model, features)
    loss, logit_grads = distillation_loss(logits, teacher.logits, label, cfg)
    return loss, head_backward(model, cache, logit_grads)


# Checkpoint layout: magic, u16 version, 8-byte family tag, config integers,
# then both parameter vectors as little-endian f64 in declaration order.
_CKPT_MAGIC = b"QTLC"
_CKPT_VERSION = 1
_CKPT_HEADER = struct.Struct("<4sH8sHHHHIIqQQ")


def save_checkpoint(model: HybridModel, path: str) -> None:
    cfg = model.config
    header = _CKPT_HEADER.pack(
        _CKPT_MAGIC, _CKPT_VERSION, cfg.family.encode("ascii").ljust(8, b"\0"),
        cfg.n_qubits, cfg.depth, cfg.locality, cfg.num_classes,
        cfg.feature_dim, cfg.hidden_dim, cfg.seed,
        model.classical_param_count, model.quantum_param_count,
    )
    payload = (np.ascontiguousarray(model.classical_params, dtype="<f8").tobytes()
               + np.ascontiguousarray(model.quantum_params, dtype="<f8").tobytes())
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(header + payload)
    os.replace(tmp, path)


def load_checkpoint(path: str) -> HybridModel:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _CKPT_HEADER.size:
        raise CorruptionError("checkpoint shorter than its header")
    (magic, version, family_raw, n_qubits, depth, locality, num_classes,
     feature_dim, hidden_dim, seed, n_classical, n_quantum) = _CKPT_HEADER.unpack_from(data)
    if magic != _CKPT_MAGIC:
        raise FormatError(f"bad checkpoint magic {magic!r}")
    if version != _CKPT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    config = HeadConfig(family_raw.rstrip(b"\0").decode("ascii"), n_qubits, depth,
                        locality, num_classes, feature_dim, hidden_dim, seed)
    expected = _CKPT_HEADER.size + 8 * (n_classical + n_quantum)
    if len(data) != expected:
        raise CorruptionError(f"expected {expected} bytes, got {len(data)}")
    model = build_head(config)
    if (model.classical_param_count, model.quantum_param_count) != (n_classical, n_quantum):
        raise CorruptionError("stored parameter counts do not match the rebuilt model")
    flat = np.frombuffer(data, dtype="<f8", count=n_classical + n_quantum,
                         offset=_CKPT_HEADER.size)
    model.apply_updates(classical=flat[:n_classical].astype(float),
                        quantum=flat[n_classical:].astype(float))
    return model
