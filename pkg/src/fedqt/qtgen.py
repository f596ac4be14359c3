"""Quantum-Train weight generation.

A ``ceil(log2 p)``-qubit encoding-free circuit yields ``2**n_qt`` basis
probabilities. A single tanh neuron maps each ``(basis bits, probability)``
pair to one classical weight, so ``p`` weights come from ``n_qt * L`` angles
plus ``n_qt + 2`` mapping scalars.

Mapping input for basis index ``i``: the bits of ``i`` (big-endian, coded as
-1/+1) followed by ``2**n_qt * prob_i``. The probability is rescaled so that a
uniform distribution feeds the neuron an input of exactly 1.
"""
from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass
from functools import lru_cache
import threading

import numpy as np

from . import vqc
from .errors import ConfigurationError


def required_qubits(p: int) -> int:
    """Smallest ``n`` with ``2**n >= p``, i.e. ``ceil(log2 p)``."""
    if p < 2:
        raise ConfigurationError(f"target parameter count must be >= 2, got {p}")
    return (int(p) - 1).bit_length()


@dataclass(frozen=True)
class MappingParams:
    weights: np.ndarray  # (n_qt + 1,): n_qt bit weights then the probability weight
    bias: float

    @classmethod
    def from_flat(cls, flat) -> "MappingParams":
        flat = np.asarray(flat, dtype=np.float64)
        return cls(flat[:-1].copy(), float(flat[-1]))

    def flat(self) -> np.ndarray:
        return np.append(self.weights, self.bias)

    @property
    def size(self) -> int:
        return self.weights.size + 1


@dataclass(frozen=True)
class QtModel:
    p: int
    n_layers: int
    gamma: np.ndarray
    beta: MappingParams

    def __post_init__(self):
        n_qt = required_qubits(self.p)
        if self.n_layers < 1:
            raise ConfigurationError(f"QT layer count must be >= 1, got {self.n_layers}")
        if np.shape(self.gamma) != (n_qt * self.n_layers,):
            raise ConfigurationError(f"gamma must have {n_qt * self.n_layers} entries")
        if self.beta.weights.shape != (n_qt + 1,):
            raise ConfigurationError(f"mapping weights must have {n_qt + 1} entries")

    @property
    def n_qt(self) -> int:
        return required_qubits(self.p)

    @property
    def arch(self) -> vqc.VqcArchitecture:
        return vqc.VqcArchitecture(self.n_qt, self.n_layers, data_encoding=False)

    @property
    def n_quantum(self) -> int:
        return self.n_qt * self.n_layers

    @property
    def n_classical(self) -> int:
        return self.n_qt + 2

    def flat(self) -> np.ndarray:
        """``gamma || beta`` as exchanged between federated clients."""
        return np.concatenate([self.gamma, self.beta.flat()])

    @classmethod
    def from_flat(cls, p: int, n_layers: int, flat) -> "QtModel":
        flat = np.asarray(flat, dtype=np.float64)
        nq = required_qubits(p) * n_layers
        if flat.shape != (nq + required_qubits(p) + 2,):
            raise ConfigurationError(f"flat QT vector has wrong length {flat.shape}")
        return cls(p, n_layers, flat[:nq].copy(), MappingParams.from_flat(flat[nq:]))

    @classmethod
    def init(cls, p: int, n_layers: int, rng: np.random.Generator,
             beta_scale: float = 0.1) -> "QtModel":
        n_qt = required_qubits(p)
        gamma = rng.uniform(0.0, math.pi, n_qt * n_layers)
        beta = rng.uniform(-beta_scale, beta_scale, n_qt + 2)
        return cls(p, n_layers, gamma, MappingParams.from_flat(beta))


def parameter_counts(p: int, n_layers: int) -> tuple[int, int]:
    """(classical, quantum) trainable scalars of a QT generator for ``p`` weights."""
    n_qt = required_qubits(p)
    return n_qt + 2, n_qt * n_layers


@lru_cache(maxsize=None)
def basis_signs(n_qt: int) -> np.ndarray:
    """``(2**n_qt, n_qt)`` matrix of -1/+1 coded basis bits, big-endian."""
    s = -vqc.qsim.z_signs(n_qt)  # z sign is +1 for bit 0, so negate
    s.setflags(write=False)
    return s


def mapping_forward(basis_bits, prob: float, beta: MappingParams) -> float:
    bits = np.asarray(basis_bits)
    n_qt = bits.size
    u = np.append(2.0 * bits - 1.0, (2.0 ** n_qt) * prob)
    return math.tanh(float(beta.weights @ u) + beta.bias)


def _mapping_inputs(n_qt: int, probs: np.ndarray, p: int) -> np.ndarray:
    return np.column_stack([basis_signs(n_qt)[:p], (2.0 ** n_qt) * probs[:p]])


class _JacobianCache:
    """Small LRU of probability Jacobians keyed by the exact angle bytes.

    All federated clients receive the same ``gamma`` each round, so the
    parameter-shift sweep is shared. Keys are bit-exact, so hits are exact.
    """

    def __init__(self, maxsize: int = 8):
        self.maxsize = maxsize
        self._data: OrderedDict = OrderedDict()
        self._lock = threading.Lock()

    def get(self, arch: vqc.VqcArchitecture, gamma: np.ndarray):
        key = (arch.n_qubits, arch.n_layers, gamma.tobytes())
        with self._lock:
            if key in self._data:
                self._data.move_to_end(key)
                return self._data[key]
        rows = np.concatenate([gamma[None, :], vqc._shifted(gamma)])
        probs = vqc.batch_basis_probs(arch, rows)
        k = gamma.size
        value = (probs[0], ((probs[1 : 1 + k] - probs[1 + k :]) / 2).T)
        with self._lock:
            self._data[key] = value
            while len(self._data) > self.maxsize:
                self._data.popitem(last=False)
        return value

    def clear(self):
        with self._lock:
            self._data.clear()


jacobian_cache = _JacobianCache()


def generate_weights(model: QtModel) -> np.ndarray:
    """Materialise the ``p`` classical weights ``kappa``."""
    probs = vqc.basis_probs(model.arch, model.gamma)
    u = _mapping_inputs(model.n_qt, probs, model.p)
    return np.tanh(u @ model.beta.weights + model.beta.bias)


def qt_backward(model: QtModel, dl_dkappa) -> tuple[np.ndarray, np.ndarray]:
    """Pull ``dL/dkappa`` back to ``(dL/dgamma, dL/dbeta)``.

    ``dL/dbeta`` is ordered like :meth:`MappingParams.flat`.
    """
    g = np.asarray(dl_dkappa, dtype=np.float64)
    if g.shape != (model.p,):
        raise ConfigurationError(f"expected gradient of length {model.p}, got {g.shape}")
    probs, jac = jacobian_cache.get(model.arch, np.ascontiguousarray(model.gamma, dtype=np.float64))
    u = _mapping_inputs(model.n_qt, probs, model.p)
    kappa = np.tanh(u @ model.beta.weights + model.beta.bias)
    dz = g * (1.0 - kappa * kappa)
    d_beta = np.append(dz @ u, dz.sum())
    d_prob = dz * model.beta.weights[-1] * (2.0 ** model.n_qt)
    d_gamma = d_prob @ jac[: model.p]
    return d_gamma, d_beta
