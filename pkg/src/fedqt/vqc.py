"""Variational circuits: Hadamard init, optional Ry data encoding, and L blocks
of [CNOT chain, trainable Ry per qubit].

Single-circuit helpers (:func:`encode`, :func:`apply_variational`) run on the
complex :mod:`fedqt.qsim` engine. Measurement outputs and parameter-shift
gradients go through the batched real-amplitude kernel in
:mod:`fedqt.kernels`; H, Ry and CNOT are real matrices, so amplitudes started
from ``|0...0>`` never acquire an imaginary part.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import kernels, qsim
from .errors import ConfigurationError

SHIFT = math.pi / 2


@dataclass(frozen=True)
class VqcArchitecture:
    n_qubits: int
    n_layers: int
    data_encoding: bool = True

    def __post_init__(self):
        if not 1 <= self.n_qubits <= qsim.MAX_QUBITS:
            raise ConfigurationError(f"n_qubits must be in [1, {qsim.MAX_QUBITS}], got {self.n_qubits}")
        if self.n_layers < 1:
            raise ConfigurationError(f"n_layers must be >= 1, got {self.n_layers}")

    @property
    def n_params(self) -> int:
        return self.n_qubits * self.n_layers


class _Counter:
    """Thread-safe tally of simulated circuit executions."""

    def __init__(self):
        self._lock = threading.Lock()
        self.count = 0

    def add(self, k: int) -> None:
        with self._lock:
            self.count += k

    def reset(self) -> None:
        with self._lock:
            self.count = 0


circuit_counter = _Counter()


def check_params(arch: VqcArchitecture, params) -> np.ndarray:
    params = np.asarray(params, dtype=np.float64)
    if params.shape[-1] != arch.n_params:
        raise ConfigurationError(
            f"expected {arch.n_params} angles ({arch.n_qubits} qubits x {arch.n_layers} layers), "
            f"got {params.shape[-1]}"
        )
    if not np.all(np.isfinite(params)):
        raise ConfigurationError("variational angles must be finite")
    return params


@lru_cache(maxsize=None)
def cnot_chain_source(n: int) -> np.ndarray:
    """Gather index for CNOT(0,1) CNOT(1,2) ... CNOT(n-2,n-1) applied in sequence.

    The chain sends basis bit ``b_k`` to the prefix parity ``b_0 ^ ... ^ b_k``;
    ``new = old[src]`` inverts that map.
    """
    dim = 1 << n
    idx = np.arange(dim, dtype=np.int64)
    image = idx.copy()
    # prefix xor along the big-endian bit order: qubit k is bit n-1-k
    for k in range(1, n):
        prev = (image >> (n - k)) & 1
        image ^= prev << (n - 1 - k)
    src = np.empty(dim, dtype=np.int64)
    src[image] = idx
    src.setflags(write=False)
    return src


# -- single-circuit path on the complex engine -------------------------------

def encode(arch: VqcArchitecture, x) -> qsim.StateVector:
    """Prepare ``Ry(x_1)H |0> (x) ... (x) Ry(x_n)H |0>``."""
    if not arch.data_encoding:
        raise ConfigurationError("architecture has no data-encoding block")
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (arch.n_qubits,):
        raise ConfigurationError(f"expected input of length {arch.n_qubits}, got shape {x.shape}")
    s = qsim.new_zero_state(arch.n_qubits)
    for q in range(arch.n_qubits):
        s = qsim.apply_ry(qsim.apply_hadamard(s, q), q, float(x[q]))
    return s


def hadamard_layer(arch: VqcArchitecture) -> qsim.StateVector:
    s = qsim.new_zero_state(arch.n_qubits)
    for q in range(arch.n_qubits):
        s = qsim.apply_hadamard(s, q)
    return s


def apply_variational(s: qsim.StateVector, arch: VqcArchitecture, params) -> qsim.StateVector:
    """Apply ``V_L ... V_1``; each block is a CNOT chain then one Ry per qubit."""
    params = check_params(arch, params)
    if s.num_qubits != arch.n_qubits:
        raise ConfigurationError("state and architecture disagree on qubit count")
    n = arch.n_qubits
    for layer in range(arch.n_layers):
        for q in range(n - 1):
            s = qsim.apply_cnot(s, q, q + 1)
        for q in range(n):
            s = qsim.apply_ry(s, q, float(params[layer * n + q]))
    return s


# -- batched kernel path -----------------------------------------------------

def encoded_states(xs: np.ndarray) -> np.ndarray:
    """Real product states ``(B, 2**n)`` for a batch of encoding angles ``(B, n)``."""
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    c, s = np.cos(xs / 2), np.sin(xs / 2)
    r = 1 / math.sqrt(2.0)
    amp0, amp1 = (c - s) * r, (s + c) * r
    out = np.ones((xs.shape[0], 1))
    for q in range(xs.shape[1]):
        out = np.stack([out * amp0[:, q : q + 1], out * amp1[:, q : q + 1]], axis=2).reshape(xs.shape[0], -1)
    return out


def run_batch(arch: VqcArchitecture, init: np.ndarray | None, angles: np.ndarray) -> np.ndarray:
    """Evolve ``B`` circuits. ``init=None`` starts every row from ``H^n |0>``."""
    angles = np.atleast_2d(check_params(arch, angles))
    b = angles.shape[0]
    dim = 1 << arch.n_qubits
    if init is None:
        psi = np.full((b, dim), 1 / math.sqrt(dim))
    else:
        psi = np.array(init, dtype=np.float64, order="C", copy=True)
        if psi.shape != (b, dim):
            raise ConfigurationError(f"init batch shape {psi.shape} != {(b, dim)}")
    half = angles.reshape(b, arch.n_layers, arch.n_qubits) / 2
    circuit_counter.add(b)
    kernels.evolve(psi, np.ascontiguousarray(np.cos(half)), np.ascontiguousarray(np.sin(half)),
                   cnot_chain_source(arch.n_qubits))
    return psi


def batch_expectations(arch: VqcArchitecture, xs, angles) -> np.ndarray:
    """Pauli-Z expectations ``(B, n)`` for inputs ``(B, n)`` and angles ``(B, P)``."""
    if not arch.data_encoding:
        raise ConfigurationError("expectations need a data-encoding architecture")
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    if xs.shape[1] != arch.n_qubits:
        raise ConfigurationError(f"expected inputs with {arch.n_qubits} columns, got {xs.shape}")
    psi = run_batch(arch, encoded_states(xs), angles)
    return (psi * psi) @ qsim.z_signs(arch.n_qubits)


def batch_basis_probs(arch: VqcArchitecture, angles) -> np.ndarray:
    if arch.data_encoding:
        raise ConfigurationError("basis probabilities are produced by the encoding-free circuit")
    psi = run_batch(arch, None, angles)
    return psi * psi


def expectations(arch: VqcArchitecture, x, params) -> np.ndarray:
    return batch_expectations(arch, np.asarray(x, dtype=np.float64)[None, :], params)[0]


def basis_probs(arch: VqcArchitecture, params) -> np.ndarray:
    return batch_basis_probs(arch, params)[0]


def _shifted(params: np.ndarray) -> np.ndarray:
    """Rows ``params + s e_k`` for k = 0..P-1 then ``params - s e_k``."""
    eye = np.eye(params.size) * SHIFT
    return np.concatenate([params + eye, params - eye])


def param_shift_grad(arch: VqcArchitecture, x, params, output: str | None = None) -> np.ndarray:
    """Jacobian ``(outputs, P)`` of expectations or basis probabilities.

    ``output`` is ``"expectations"`` or ``"probabilities"``; by default it follows
    ``arch.data_encoding``. Uses ``2 P`` circuit evaluations.
    """
    params = check_params(arch, params)
    if output is None:
        output = "expectations" if arch.data_encoding else "probabilities"
    rows = _shifted(params)
    if output == "expectations":
        xs = np.broadcast_to(np.asarray(x, dtype=np.float64), (rows.shape[0], arch.n_qubits))
        f = batch_expectations(arch, xs, rows)
    elif output == "probabilities":
        if arch.data_encoding:
            f = run_batch(arch, encoded_states(np.broadcast_to(x, (rows.shape[0], arch.n_qubits))), rows) ** 2
        else:
            f = batch_basis_probs(arch, rows)
    else:
        raise ConfigurationError(f"unknown output selector {output!r}")
    p = params.size
    return ((f[:p] - f[p:]) / 2).T


def expectations_with_grads(arch: VqcArchitecture, xs, params):
    """Expectations and their exact derivatives for a batch sharing one parameter vector.

    Returns ``(f, d_theta, d_x)`` with shapes ``(B, n)``, ``(B, n, P)`` and
    ``(B, n, n)``. The input derivative also follows the shift rule because each
    ``x_j`` enters as an Ry angle. Costs ``B (1 + 2P + 2n)`` circuit runs.
    """
    params = check_params(arch, params)
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    b, n = xs.shape
    p = params.size
    theta_rows = np.concatenate([params[None, :], _shifted(params)])  # (1 + 2P, P)
    eye_x = np.eye(n) * SHIFT
    x_rows = np.concatenate([xs[:, None, :] + eye_x, xs[:, None, :] - eye_x], axis=1)  # (B, 2n, n)

    all_x = np.concatenate(
        [np.repeat(xs[:, None, :], theta_rows.shape[0], axis=1), x_rows], axis=1
    ).reshape(-1, n)
    all_theta = np.concatenate(
        [np.broadcast_to(theta_rows, (b,) + theta_rows.shape),
         np.broadcast_to(params, (b, 2 * n, p))], axis=1
    ).reshape(-1, p)
    out = batch_expectations(arch, all_x, all_theta).reshape(b, 1 + 2 * p + 2 * n, n)
    f = out[:, 0]
    d_theta = ((out[:, 1 : 1 + p] - out[:, 1 + p : 1 + 2 * p]) / 2).transpose(0, 2, 1)
    d_x = ((out[:, 1 + 2 * p : 1 + 2 * p + n] - out[:, 1 + 2 * p + n :]) / 2).transpose(0, 2, 1)
    return f, d_theta, d_x
