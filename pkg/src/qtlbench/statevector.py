"""Dense statevector simulation of small qubit registers.

Basis ordering is big-endian: qubit 0 owns the most significant bit of the
amplitude index, so ket |b0 b1 ... b_{n-1}> maps to index sum(b_q * 2^(n-1-q)).
Rotation gates follow the exp(-i*theta*P/2) convention.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CapacityError,
    DegenerateInputError,
    MalformedGateError,
    ConfigurationError,
    ShapeError,
)

MAX_QUBITS = 12

ROTATION_KINDS = frozenset({"RX", "RY", "RZ"})
SINGLE_QUBIT_KINDS = ROTATION_KINDS | {"H"}
TWO_QUBIT_KINDS = frozenset({"CNOT", "CZ"})
GATE_KINDS = SINGLE_QUBIT_KINDS | TWO_QUBIT_KINDS

_H_MATRIX = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=complex) / math.sqrt(2.0)


@dataclass(frozen=True)
class StateVector:
    """Amplitudes of an n-qubit register; treat as immutable once returned."""

    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.ndim != 1 or amps.shape[0] != 1 << self.n_qubits:
            raise ShapeError(
                f"expected {1 << self.n_qubits} amplitudes for "
                f"{self.n_qubits} qubits, got shape {amps.shape}"
            )
        object.__setattr__(self, "amplitudes", amps)

    def norm_sq(self) -> float:
        a = self.amplitudes
        return float(np.sum(a.real * a.real + a.imag * a.imag))


@dataclass(frozen=True)
class GateOp:
    """One gate: fixed angle, or an angle bound later through param_slot."""

    kind: str
    targets: tuple[int, ...]
    angle: float | None = None
    param_slot: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        if self.kind not in GATE_KINDS:
            raise MalformedGateError(f"unknown gate kind {self.kind!r}")
        want = 1 if self.kind in SINGLE_QUBIT_KINDS else 2
        if len(self.targets) != want:
            raise ShapeError(f"{self.kind} takes {want} target(s), got {self.targets}")
        if len(set(self.targets)) != len(self.targets):
            raise ShapeError(f"duplicate targets in {self.kind}: {self.targets}")
        if self.kind in ROTATION_KINDS:
            if self.angle is None and self.param_slot is None:
                raise MalformedGateError(f"{self.kind} requires an angle or a param_slot")
        else:
            if self.angle is not None or self.param_slot is not None:
                raise MalformedGateError(f"{self.kind} does not take an angle")


@dataclass(frozen=True)
class PauliString:
    """Tensor product of single-qubit Paulis; Z-only alphabet for now.

    The letters field is the extension point for X/Y support later.
    """

    letters: tuple[str, ...]
    support: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        letters = tuple(self.letters)
        for c in letters:
            if c not in ("I", "Z"):
                raise ShapeError(f"unsupported Pauli letter {c!r}")
        support = tuple(q for q, c in enumerate(letters) if c != "I")
        if not support:
            raise DegenerateInputError("observable must act on at least one qubit")
        object.__setattr__(self, "letters", letters)
        object.__setattr__(self, "support", support)

    @property
    def n_qubits(self) -> int:
        return len(self.letters)

    @classmethod
    def z_on(cls, n_qubits: int, *qubits: int) -> "PauliString":
        """Z on the given qubits, identity elsewhere."""
        letters = ["I"] * n_qubits
        for q in qubits:
            if not 0 <= q < n_qubits:
                raise ShapeError(f"qubit {q} outside register of size {n_qubits}")
            letters[q] = "Z"
        return cls(tuple(letters))


@dataclass(frozen=True)
class CircuitProgram:
    """Ordered gate list with a declared number of bindable parameter slots."""

    n_qubits: int
    ops: tuple[GateOp, ...]
    param_count: int

    def __post_init__(self):
        object.__setattr__(self, "ops", tuple(self.ops))
        seen: set[int] = set()
        for op in self.ops:
            for t in op.targets:
                if not 0 <= t < self.n_qubits:
                    raise ShapeError(
                        f"target {t} outside register of size {self.n_qubits}"
                    )
            if op.param_slot is not None:
                if not 0 <= op.param_slot < self.param_count:
                    raise ConfigurationError(
                        f"param_slot {op.param_slot} >= param_count {self.param_count}"
                    )
                seen.add(op.param_slot)
        if len(seen) != self.param_count:
            missing = sorted(set(range(self.param_count)) - seen)
            raise ConfigurationError(f"unreferenced param slots: {missing}")


def rotation_matrix(kind: str, theta: float) -> np.ndarray:
    """2x2 unitary for RX/RY/RZ under the exp(-i*theta*P/2) convention."""
    c, s = math.cos(theta / 2.0), math.sin(theta / 2.0)
    if kind == "RX":
        return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)
    if kind == "RY":
        return np.array([[c, -s], [s, c]], dtype=complex)
    if kind == "RZ":
        return np.array([[c - 1j * s, 0.0], [0.0, c + 1j * s]], dtype=complex)
    raise MalformedGateError(f"{kind} is not a rotation")


def init_zero(n: int) -> StateVector:
    """|0...0> on n qubits."""
    if not 1 <= n <= MAX_QUBITS:
        raise CapacityError(f"qubit count {n} outside supported range 1..{MAX_QUBITS}")
    amps = np.zeros(1 << n, dtype=complex)
    amps[0] = 1.0
    return StateVector(n, amps)


def amplitude_encode(v: np.ndarray) -> StateVector:
    """Normalize a real 2^n-length vector into the amplitudes of an n-qubit state."""
    vec = np.asarray(v, dtype=float)
    if vec.ndim != 1:
        raise ShapeError(f"expected a flat vector, got shape {vec.shape}")
    size = vec.shape[0]
    n = size.bit_length() - 1
    if size < 2 or (1 << n) != size:
        raise ShapeError(f"vector length {size} is not a power of two >= 2")
    if n > MAX_QUBITS:
        raise CapacityError(f"vector of length {size} needs {n} qubits (max {MAX_QUBITS})")
    norm = math.sqrt(float(np.dot(vec, vec)))
    if norm == 0.0:
        raise DegenerateInputError("cannot amplitude-encode the zero vector")
    return StateVector(n, (vec / norm).astype(complex))


def _apply_single_inplace(amps: np.ndarray, mat: np.ndarray, q: int, n: int) -> np.ndarray:
    view = amps.reshape(1 << q, 2, -1)
    a, b = view[:, 0, :], view[:, 1, :]
    out = np.empty_like(view)
    out[:, 0, :] = mat[0, 0] * a + mat[0, 1] * b
    out[:, 1, :] = mat[1, 0] * a + mat[1, 1] * b
    return out.reshape(-1)


def _apply_cnot(amps: np.ndarray, control: int, target: int, n: int) -> np.ndarray:
    v = amps.reshape([2] * n)
    out = v.copy()
    lo = [slice(None)] * n
    hi = [slice(None)] * n
    lo[control] = 1
    hi[control] = 1
    lo[target] = 0
    hi[target] = 1
    out[tuple(lo)] = v[tuple(hi)]
    out[tuple(hi)] = v[tuple(lo)]
    return out.reshape(-1)


def _apply_cz(amps: np.ndarray, a: int, b: int, n: int) -> np.ndarray:
    v = amps.reshape([2] * n).copy()
    idx = [slice(None)] * n
    idx[a] = 1
    idx[b] = 1
    v[tuple(idx)] *= -1.0
    return v.reshape(-1)


def _apply_op(amps: np.ndarray, kind: str, targets: tuple[int, ...],
              angle: float | None, n: int) -> np.ndarray:
    if kind in ROTATION_KINDS:
        return _apply_single_inplace(amps, rotation_matrix(kind, angle), targets[0], n)
    if kind == "H":
        return _apply_single_inplace(amps, _H_MATRIX, targets[0], n)
    if kind == "CNOT":
        return _apply_cnot(amps, targets[0], targets[1], n)
    if kind == "CZ":
        return _apply_cz(amps, targets[0], targets[1], n)
    raise MalformedGateError(f"unknown gate kind {kind!r}")


def apply_gate(state: StateVector, gate: GateOp) -> StateVector:
    """Apply one gate with a concrete angle; slot-bound gates must be resolved first."""
    n = state.n_qubits
    for t in gate.targets:
        if not 0 <= t < n:
            raise ShapeError(f"target {t} outside register of size {n}")
    if gate.kind in ROTATION_KINDS and gate.angle is None:
        raise MalformedGateError(f"{gate.kind} has no bound angle")
    amps = _apply_op(state.amplitudes, gate.kind, gate.targets, gate.angle, n)
    return StateVector(n, amps)


def run_program(program: CircuitProgram, params: np.ndarray,
                input_state: StateVector) -> StateVector:
    """Run all gates in order, reading slot-bound angles from params."""
    params = np.asarray(params, dtype=float)
    if params.shape != (program.param_count,):
        raise ShapeError(
            f"program expects {program.param_count} parameters, got shape {params.shape}"
        )
    if input_state.n_qubits != program.n_qubits:
        raise ShapeError(
            f"program is on {program.n_qubits} qubits, state has {input_state.n_qubits}"
        )
    n = program.n_qubits
    amps = input_state.amplitudes.copy()
    for op in program.ops:
        angle = op.angle if op.param_slot is None else float(params[op.param_slot])
        amps = _apply_op(amps, op.kind, op.targets, angle, n)
    return StateVector(n, amps)


def z_sign_vector(n: int, support: tuple[int, ...]) -> np.ndarray:
    """Diagonal of a Z-string observable: (-1)^(parity of supported bits)."""
    idx = np.arange(1 << n)
    parity = np.zeros(1 << n, dtype=np.int64)
    for q in support:
        parity ^= (idx >> (n - 1 - q)) & 1
    return 1.0 - 2.0 * parity


def expectation(state: StateVector, observable: PauliString) -> float:
    """<psi|M|psi> for a Z-string observable, clamped to [-1, 1]."""
    if observable.n_qubits != state.n_qubits:
        raise ShapeError(
            f"observable on {observable.n_qubits} qubits, state has {state.n_qubits}"
        )
    a = state.amplitudes
    probs = a.real * a.real + a.imag * a.imag
    val = float(np.dot(probs, z_sign_vector(state.n_qubits, observable.support)))
    return min(1.0, max(-1.0, val))
