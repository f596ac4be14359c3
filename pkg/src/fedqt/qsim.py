"""Dense statevector engine for the {H, Ry, CNOT} gate set.

Amplitude index ``i`` encodes the basis label big-endian: qubit 0 is the most
significant bit of ``i``, so ``|q0 q1 ... q_{n-1}>`` reads left to right.
Every gate returns a new :class:`StateVector`; inputs are never mutated.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

MAX_QUBITS = 16

_H = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=np.complex128) / math.sqrt(2.0)


@dataclass(frozen=True)
class StateVector:
    num_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        if self.amplitudes.shape != (1 << self.num_qubits,):
            raise ConfigurationError(
                f"expected {1 << self.num_qubits} amplitudes, got {self.amplitudes.shape}"
            )

    def norm(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2))


def _check_qubit(s: StateVector, q: int) -> None:
    if not 0 <= q < s.num_qubits:
        raise ConfigurationError(f"qubit index {q} out of range for {s.num_qubits} qubits")


def new_zero_state(n: int) -> StateVector:
    """Return ``|0...0>`` on ``n`` qubits (1 <= n <= 16)."""
    if not 1 <= n <= MAX_QUBITS:
        raise ConfigurationError(f"qubit count must be in [1, {MAX_QUBITS}], got {n}")
    amps = np.zeros(1 << n, dtype=np.complex128)
    amps[0] = 1.0
    return StateVector(n, amps)


def _apply_1q(s: StateVector, q: int, m: np.ndarray) -> StateVector:
    n = s.num_qubits
    # axis 1 of this view is qubit q under the big-endian convention
    psi = s.amplitudes.reshape(1 << q, 2, 1 << (n - q - 1))
    out = np.einsum("ab,ibj->iaj", m, psi)
    return StateVector(n, np.ascontiguousarray(out).reshape(-1))


def apply_hadamard(s: StateVector, q: int) -> StateVector:
    _check_qubit(s, q)
    return _apply_1q(s, q, _H)


def ry_matrix(theta: float) -> np.ndarray:
    c, sn = math.cos(theta / 2.0), math.sin(theta / 2.0)
    return np.array([[c, -sn], [sn, c]], dtype=np.complex128)


def apply_ry(s: StateVector, q: int, theta: float) -> StateVector:
    _check_qubit(s, q)
    if not math.isfinite(theta):
        raise ConfigurationError(f"rotation angle must be finite, got {theta}")
    return _apply_1q(s, q, ry_matrix(theta))


def apply_cnot(s: StateVector, control: int, target: int) -> StateVector:
    _check_qubit(s, control)
    _check_qubit(s, target)
    if control == target:
        raise ConfigurationError("control and target must differ")
    n = s.num_qubits
    idx = np.arange(1 << n)
    cbit = (idx >> (n - 1 - control)) & 1
    src = np.where(cbit == 1, idx ^ (1 << (n - 1 - target)), idx)
    return StateVector(n, s.amplitudes[src].copy())


def probabilities(s: StateVector) -> np.ndarray:
    return np.abs(s.amplitudes) ** 2


def z_signs(n: int) -> np.ndarray:
    """Matrix ``(2**n, n)`` of Pauli-Z eigenvalues: entry ``[i, q] = 1 - 2*bit_q(i)``."""
    idx = np.arange(1 << n)[:, None]
    shifts = (n - 1 - np.arange(n))[None, :]
    return (1 - 2 * ((idx >> shifts) & 1)).astype(np.float64)


def z_expectation(s: StateVector, q: int) -> float:
    _check_qubit(s, q)
    return float(probabilities(s) @ z_signs(s.num_qubits)[:, q])
