"""Exact gradients of circuit expectations via the parameter-shift rule.

Shared parameter slots (one angle feeding several gates) are handled by
shifting each gate occurrence separately and summing, which is the product
rule. A central finite-difference evaluator is provided as an independent
check; it is not used on the production path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericFaultError, ShapeError, UnsupportedGeneratorError
from .statevector import (
    CircuitProgram,
    PauliString,
    ROTATION_KINDS,
    StateVector,
    expectation,
    run_program,
    z_sign_vector,
)

_SHIFT = math.pi / 2.0


@dataclass(frozen=True)
class GradientTape:
    """Per-step quantum gradients: d<M_j>/dtheta_k for a measurement plan."""

    quantum_grads: np.ndarray
    observable_jacobian: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.quantum_grads, dtype=float)
        j = np.asarray(self.observable_jacobian, dtype=float)
        if g.ndim != 1 or j.ndim != 2 or j.shape[1] != g.shape[0]:
            raise ShapeError(
                f"jacobian shape {j.shape} does not match gradient length {g.shape}"
            )
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(j))):
            raise NumericFaultError("non-finite gradient entries")
        object.__setattr__(self, "quantum_grads", g)
        object.__setattr__(self, "observable_jacobian", j)


def _parameterized_occurrences(program: CircuitProgram) -> list[tuple[int, int]]:
    """(op index, slot) pairs in op order; rejects non-rotation generators."""
    occ = []
    for i, op in enumerate(program.ops):
        if op.param_slot is not None:
            if op.kind not in ROTATION_KINDS:
                raise UnsupportedGeneratorError(
                    f"parameterized {op.kind} has no two-point shift rule"
                )
            occ.append((i, op.param_slot))
    return occ


def _resolve_angles(program: CircuitProgram, params: np.ndarray) -> np.ndarray:
    """Concrete angle per op (0.0 placeholder for angle-free gates)."""
    angles = np.zeros(len(program.ops))
    for i, op in enumerate(program.ops):
        if op.param_slot is not None:
            angles[i] = params[op.param_slot]
        elif op.angle is not None:
            angles[i] = op.angle
    return angles


_INV_SQRT2 = 1.0 / math.sqrt(2.0)


def _compile_steps(program: CircuitProgram) -> list[tuple]:
    """Fuse runs of single-qubit gates per qubit into one 2x2 segment each.

    Single-qubit gates on distinct qubits commute, so each qubit accumulates
    its pending gates until a two-qubit gate touches it. Steps are either
    ("1q", qubit, components) with components as (kind, op_index, fixed_angle)
    tuples in application order, or ("2q", kind, a, b).
    """
    pending: dict[int, list[tuple]] = {}
    steps: list[tuple] = []

    def _flush(q: int) -> None:
        if pending.get(q):
            steps.append(("1q", q, tuple(pending.pop(q))))

    for i, op in enumerate(program.ops):
        if op.kind in ROTATION_KINDS or op.kind == "H":
            pending.setdefault(op.targets[0], []).append((op.kind, i, op.angle))
        else:
            _flush(op.targets[0])
            _flush(op.targets[1])
            steps.append(("2q", op.kind, op.targets[0], op.targets[1]))
    for q in sorted(pending):
        _flush(q)
    return steps


def _segment_matrix(components: tuple, angle_rows: np.ndarray):
    """Compose the segment's 2x2 matrix; entries are scalars or (rows,) arrays."""
    m00, m01, m10, m11 = 1.0 + 0.0j, 0.0j, 0.0j, 1.0 + 0.0j
    for kind, op_idx, fixed in components:
        if kind == "H":
            g00 = g01 = g10 = _INV_SQRT2
            g11 = -_INV_SQRT2
        else:
            half = (angle_rows[:, op_idx] if fixed is None else fixed) / 2.0
            c, s = np.cos(half), np.sin(half)
            if kind == "RX":
                g00, g01, g10, g11 = c, -1j * s, -1j * s, c
            elif kind == "RY":
                g00, g01, g10, g11 = c, -s, s, c
            else:
                g00, g01, g10, g11 = c - 1j * s, 0.0j, 0.0j, c + 1j * s
        m00, m01, m10, m11 = (g00 * m00 + g01 * m10, g00 * m01 + g01 * m11,
                              g10 * m00 + g11 * m10, g10 * m01 + g11 * m11)
    return m00, m01, m10, m11


def _col(m, rows: int):
    """Broadcastable (rows, 1, 1) view of a per-row coefficient."""
    return m.reshape(rows, 1, 1) if isinstance(m, np.ndarray) else m


def _run_batch(program: CircuitProgram, angle_rows: np.ndarray,
               input_amps: np.ndarray) -> np.ndarray:
    """Run the program once per row of angle_rows, all rows starting from input_amps.

    angle_rows has one column per op (columns for angle-free gates are ignored).
    Returns the final amplitudes, shape (rows, 2^n).
    """
    n = program.n_qubits
    rows = angle_rows.shape[0]
    states = np.broadcast_to(input_amps, (rows, input_amps.shape[0])).copy()
    for step in _compile_steps(program):
        if step[0] == "1q":
            _, q, components = step
            m00, m01, m10, m11 = (_col(m, rows) for m in
                                  _segment_matrix(components, angle_rows))
            view = states.reshape(rows, 1 << q, 2, -1)
            a, b = view[:, :, 0, :], view[:, :, 1, :]
            t = a.copy()
            a *= m00
            a += m01 * b
            b *= m11
            b += m10 * t
        else:
            _, kind, qa, qb = step
            view = states.reshape([rows] + [2] * n)
            sel = [slice(None)] * (n + 1)
            sel[qa + 1] = 1
            if kind == "CZ":
                sel[qb + 1] = 1
                view[tuple(sel)] *= -1.0
            else:
                sel[qb + 1] = 0
                lo = tuple(sel)
                sel[qb + 1] = 1
                hi = tuple(sel)
                tmp = view[lo].copy()
                view[lo] = view[hi]
                view[hi] = tmp
    return states


def observable_jacobian(program: CircuitProgram, params: np.ndarray,
                        input_state: StateVector,
                        observables: list[PauliString]) -> np.ndarray:
    """d<M_j>/dtheta_k matrix, shape (len(observables), program.param_count)."""
    params = np.asarray(params, dtype=float)
    if params.shape != (program.param_count,):
        raise ShapeError(
            f"program expects {program.param_count} parameters, got shape {params.shape}"
        )
    if input_state.n_qubits != program.n_qubits:
        raise ShapeError("input state size does not match the program")
    m = len(observables)
    occ = _parameterized_occurrences(program)
    jac = np.zeros((m, program.param_count))
    if not occ or m == 0:
        return jac
    base = _resolve_angles(program, params)
    rows = 2 * len(occ)
    angle_rows = np.tile(base, (rows, 1))
    for r, (op_idx, _slot) in enumerate(occ):
        angle_rows[2 * r, op_idx] += _SHIFT
        angle_rows[2 * r + 1, op_idx] -= _SHIFT
    finals = _run_batch(program, angle_rows, input_state.amplitudes)
    probs = finals.real ** 2 + finals.imag ** 2
    signs = np.stack(
        [z_sign_vector(program.n_qubits, obs.support) for obs in observables]
    )
    evals = probs @ signs.T  # (rows, m)
    for r, (_op_idx, slot) in enumerate(occ):
        jac[:, slot] += 0.5 * (evals[2 * r] - evals[2 * r + 1])
    return jac


def parameter_shift_gradient(program: CircuitProgram, params: np.ndarray,
                             input_state: StateVector,
                             observable: PauliString) -> np.ndarray:
    """Exact gradient of <observable> with respect to every parameter slot."""
    return observable_jacobian(program, params, input_state, [observable])[0]


def finite_difference_gradient(program: CircuitProgram, params: np.ndarray,
                               input_state: StateVector, observable: PauliString,
                               epsilon: float) -> np.ndarray:
    """Central-difference gradient; independent oracle for the shift rule."""
    if epsilon <= 0:
        raise ShapeError(f"epsilon must be positive, got {epsilon}")
    params = np.asarray(params, dtype=float)
    grads = np.zeros(program.param_count)
    for k in range(program.param_count):
        plus = params.copy()
        minus = params.copy()
        plus[k] += epsilon
        minus[k] -= epsilon
        e_plus = expectation(run_program(program, plus, input_state), observable)
        e_minus = expectation(run_program(program, minus, input_state), observable)
        grads[k] = (e_plus - e_minus) / (2.0 * epsilon)
    return grads
