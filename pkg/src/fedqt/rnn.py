"""Sequence models: classical LSTM, QLSTM and QT-LSTM.

Flat classical weight layout (the contract with :mod:`fedqt.qtgen`)::

    W_f (h x (h+in), row-major), b_f, W_i, b_i, W_C, b_C, W_o, b_o, W_out (h), b_out

Columns of each ``W`` act on ``v_t = [h_{t-1}, x_t]``. Every model predicts the
sample after a window as ``W_out . h_w + b_out`` starting from zero state.

All three model classes share one interface (``n_params``, ``counts``,
``init``, ``predict``, ``loss_and_grad``) so the federation layer can treat a
parameter vector as opaque.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import qtgen, vqc
from .errors import ConfigurationError

GATES = ("f", "i", "C", "o")


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def mse_loss(predictions, targets) -> float:
    p = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.shape != t.shape or p.size == 0:
        raise ConfigurationError(f"mse needs equal non-empty shapes, got {p.shape} and {t.shape}")
    r = p - t
    return float(np.mean(r * r))


def _as_windows(windows) -> np.ndarray:
    x = np.asarray(windows, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim == 2:
        x = x[:, :, None]
    if x.shape[1] == 0:
        raise ConfigurationError("empty window")
    return x


@dataclass(frozen=True)
class CellState:
    h: np.ndarray
    c: np.ndarray


@dataclass(frozen=True)
class LstmConfig:
    hidden_size: int = 20
    input_size: int = 1
    lookback: int = 8

    @property
    def n_params(self) -> int:
        h, d = self.hidden_size, self.input_size
        return 4 * (h * (d + h) + h) + h + 1


@dataclass(frozen=True)
class LstmWeights:
    W: np.ndarray      # (4, h, h + in), gate order f, i, C, o
    b: np.ndarray      # (4, h)
    w_out: np.ndarray  # (h,)
    b_out: float

    @classmethod
    def unpack(cls, kappa, cfg: LstmConfig) -> "LstmWeights":
        kappa = np.asarray(kappa, dtype=np.float64)
        if kappa.shape != (cfg.n_params,):
            raise ConfigurationError(f"expected {cfg.n_params} LSTM weights, got {kappa.shape}")
        h, v = cfg.hidden_size, cfg.hidden_size + cfg.input_size
        gates = kappa[: 4 * (h * v + h)].reshape(4, h * v + h)
        return cls(gates[:, : h * v].reshape(4, h, v), gates[:, h * v :],
                   kappa[4 * (h * v + h) : -1], float(kappa[-1]))

    def pack(self) -> np.ndarray:
        gates = np.concatenate([self.W.reshape(4, -1), self.b], axis=1)
        return np.concatenate([gates.reshape(-1), self.w_out, [self.b_out]])


def lstm_cell_forward(v_t, c_prev, weights: LstmWeights) -> CellState:
    """One step: gates from ``v_t = [h_{t-1}, x_t]``, then the cell/hidden update."""
    v_t = np.asarray(v_t, dtype=np.float64)
    if v_t.shape[-1] != weights.W.shape[2]:
        raise ConfigurationError(f"v_t must have {weights.W.shape[2]} entries")
    a = np.einsum("ghv,...v->...gh", weights.W, v_t) + weights.b
    f, i, o = sigmoid(a[..., 0, :]), sigmoid(a[..., 1, :]), sigmoid(a[..., 3, :])
    g = np.tanh(a[..., 2, :])
    c = f * c_prev + i * g
    return CellState(o * np.tanh(c), c)


class LstmModel:
    kind = "lstm"

    def __init__(self, cfg: LstmConfig = LstmConfig(), init_scale: float = 0.5):
        self.cfg = cfg
        self.init_scale = init_scale

    @property
    def n_params(self) -> int:
        return self.cfg.n_params

    def counts(self) -> tuple[int, int]:
        return self.cfg.n_params, 0

    def init(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(-self.init_scale, self.init_scale, self.n_params)

    def _forward(self, kappa, windows):
        wts = LstmWeights.unpack(kappa, self.cfg)
        x = _as_windows(windows)
        b, steps, _ = x.shape
        h = np.zeros((b, self.cfg.hidden_size))
        c = np.zeros_like(h)
        tape = []
        for t in range(steps):
            v = np.concatenate([h, x[:, t, :]], axis=1)
            a = np.einsum("ghv,bv->bgh", wts.W, v) + wts.b
            f, i, o = sigmoid(a[:, 0]), sigmoid(a[:, 1]), sigmoid(a[:, 3])
            g = np.tanh(a[:, 2])
            c_prev = c
            c = f * c_prev + i * g
            tc = np.tanh(c)
            h = o * tc
            tape.append((v, f, i, g, o, c_prev, tc))
        return wts, h @ wts.w_out + wts.b_out, h, tape

    def predict(self, kappa, windows) -> np.ndarray:
        return self._forward(kappa, windows)[1]

    def backward_from_pred(self, kappa, windows, d_pred) -> np.ndarray:
        """Gradient w.r.t. the flat weights given ``dL/dprediction`` per sample."""
        wts, _, h_last, tape = self._forward(kappa, windows)
        return self._bptt(wts, h_last, tape, np.asarray(d_pred, dtype=np.float64))

    def _bptt(self, wts: LstmWeights, h_last, tape, d_pred) -> np.ndarray:
        hs = self.cfg.hidden_size
        dW = np.zeros_like(wts.W)
        db = np.zeros_like(wts.b)
        dw_out = d_pred @ h_last
        db_out = d_pred.sum()
        dh = d_pred[:, None] * wts.w_out
        dc = np.zeros_like(dh)
        for v, f, i, g, o, c_prev, tc in reversed(tape):
            dc = dc + dh * o * (1.0 - tc * tc)
            da = np.stack([
                dc * c_prev * f * (1.0 - f),
                dc * g * i * (1.0 - i),
                dc * i * (1.0 - g * g),
                dh * tc * o * (1.0 - o),
            ], axis=1)
            dW += np.einsum("bgh,bv->ghv", da, v)
            db += da.sum(axis=0)
            dh = np.einsum("bgh,ghv->bv", da, wts.W)[:, :hs]
            dc = dc * f
        return LstmWeights(dW, db, dw_out, float(db_out)).pack()

    def loss_and_grad(self, kappa, windows, targets) -> tuple[float, np.ndarray]:
        wts, pred, h_last, tape = self._forward(kappa, windows)
        y = np.asarray(targets, dtype=np.float64)
        loss = mse_loss(pred, y)
        d_pred = 2.0 * (pred - y) / y.size
        return loss, self._bptt(wts, h_last, tape, d_pred)


def sequence_forward(window, model, params) -> float:
    """Predict the sample following a single window."""
    return float(model.predict(params, np.asarray(window, dtype=np.float64)[None, :])[0])


def lstm_backward(windows, targets, kappa, cfg: LstmConfig = LstmConfig()) -> np.ndarray:
    return LstmModel(cfg).loss_and_grad(kappa, windows, targets)[1]


# -- QLSTM --------------------------------------------------------------------

@dataclass(frozen=True)
class QlstmConfig:
    """Four data-encoding VQCs over ``v_t``; one qubit per component of ``v_t``."""

    hidden_size: int = 4
    input_size: int = 1
    n_layers: int = 10
    lookback: int = 8

    @property
    def n_qubits(self) -> int:
        return self.hidden_size + self.input_size

    @property
    def arch(self) -> vqc.VqcArchitecture:
        return vqc.VqcArchitecture(self.n_qubits, self.n_layers, data_encoding=True)

    @property
    def n_quantum(self) -> int:
        return 4 * self.n_qubits * self.n_layers

    @property
    def n_classical(self) -> int:
        return self.hidden_size + 1

    @property
    def n_params(self) -> int:
        return self.n_quantum + self.n_classical


def qlstm_cell_forward(v_t, c_prev, thetas, cfg: QlstmConfig) -> CellState:
    """Gate pre-activations are the first ``hidden_size`` Z expectations of each VQC."""
    v = np.asarray(v_t, dtype=np.float64)
    single = v.ndim == 1
    v = np.atleast_2d(v)
    thetas = np.asarray(thetas, dtype=np.float64)
    hs = cfg.hidden_size
    a = [vqc.batch_expectations(cfg.arch, v, np.broadcast_to(thetas[k], (v.shape[0], thetas.shape[1])))[:, :hs]
         for k in range(4)]
    f, i, o = sigmoid(a[0]), sigmoid(a[1]), sigmoid(a[3])
    c = f * c_prev + i * np.tanh(a[2])
    h = o * np.tanh(c)
    return CellState(h[0], c[0]) if single else CellState(h, c)


class QlstmModel:
    kind = "qlstm"

    def __init__(self, cfg: QlstmConfig = QlstmConfig(), init_scale: float = 0.5):
        self.cfg = cfg
        self.init_scale = init_scale

    @property
    def n_params(self) -> int:
        return self.cfg.n_params

    def counts(self) -> tuple[int, int]:
        return self.cfg.n_classical, self.cfg.n_quantum

    def init(self, rng: np.random.Generator) -> np.ndarray:
        theta = rng.uniform(0.0, math.pi, self.cfg.n_quantum)
        head = rng.uniform(-self.init_scale, self.init_scale, self.cfg.n_classical)
        return np.concatenate([theta, head])

    def unpack(self, params):
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (self.n_params,):
            raise ConfigurationError(f"expected {self.n_params} QLSTM parameters, got {params.shape}")
        nq = self.cfg.n_quantum
        return params[:nq].reshape(4, -1), params[nq:-1], float(params[-1])

    def _run(self, params, windows, with_grads: bool):
        thetas, w_out, b_out = self.unpack(params)
        x = _as_windows(windows)
        b, steps, _ = x.shape
        hs = self.cfg.hidden_size
        h = np.zeros((b, hs))
        c = np.zeros_like(h)
        tape = []
        for t in range(steps):
            v = np.concatenate([h, x[:, t, :]], axis=1)
            if with_grads:
                outs = [vqc.expectations_with_grads(self.cfg.arch, v, thetas[k]) for k in range(4)]
                a = [o[0][:, :hs] for o in outs]
            else:
                outs = None
                a = [vqc.batch_expectations(self.cfg.arch, v, np.broadcast_to(thetas[k], (b, thetas.shape[1])))[:, :hs]
                     for k in range(4)]
            f, i, o = sigmoid(a[0]), sigmoid(a[1]), sigmoid(a[3])
            g = np.tanh(a[2])
            c_prev = c
            c = f * c_prev + i * g
            tc = np.tanh(c)
            h = o * tc
            tape.append((outs, f, i, g, o, c_prev, tc))
        return thetas, w_out, b_out, h @ w_out + b_out, h, tape

    def predict(self, params, windows) -> np.ndarray:
        return self._run(params, windows, with_grads=False)[3]

    def loss_and_grad(self, params, windows, targets) -> tuple[float, np.ndarray]:
        thetas, w_out, _, pred, h_last, tape = self._run(params, windows, with_grads=True)
        y = np.asarray(targets, dtype=np.float64)
        loss = mse_loss(pred, y)
        d_pred = 2.0 * (pred - y) / y.size
        hs = self.cfg.hidden_size
        d_theta = np.zeros_like(thetas)
        dh = d_pred[:, None] * w_out
        dc = np.zeros_like(dh)
        for outs, f, i, g, o, c_prev, tc in reversed(tape):
            dc = dc + dh * o * (1.0 - tc * tc)
            da = (dc * c_prev * f * (1.0 - f), dc * g * i * (1.0 - i),
                  dc * i * (1.0 - g * g), dh * tc * o * (1.0 - o))
            dv = 0.0
            for k in range(4):
                _, jt, jx = outs[k]
                d_theta[k] += np.einsum("bh,bhp->p", da[k], jt[:, :hs])
                dv = dv + np.einsum("bh,bhv->bv", da[k], jx[:, :hs])
            dh = dv[:, :hs]
            dc = dc * f
        grad = np.concatenate([d_theta.reshape(-1), d_pred @ h_last, [d_pred.sum()]])
        return loss, grad


def qlstm_backward(windows, targets, params, cfg: QlstmConfig = QlstmConfig()) -> np.ndarray:
    return QlstmModel(cfg).loss_and_grad(params, windows, targets)[1]


# -- QT-LSTM ------------------------------------------------------------------

class QtLstmModel:
    """Classical LSTM whose weights are generated by a Quantum-Train model.

    The exchanged parameter vector is ``gamma || beta``; inference only needs
    the materialised weights (:meth:`materialize`) and the classical LSTM.
    """

    kind = "qtlstm"

    def __init__(self, cfg: LstmConfig = LstmConfig(), n_layers: int = 10, beta_scale: float = 0.1):
        self.cfg = cfg
        self.n_layers = n_layers
        self.beta_scale = beta_scale
        self.lstm = LstmModel(cfg)
        self.p = cfg.n_params
        self.n_qt = qtgen.required_qubits(self.p)

    @property
    def n_params(self) -> int:
        return self.n_qt * self.n_layers + self.n_qt + 2

    def counts(self) -> tuple[int, int]:
        return qtgen.parameter_counts(self.p, self.n_layers)

    def init(self, rng: np.random.Generator) -> np.ndarray:
        return qtgen.QtModel.init(self.p, self.n_layers, rng, self.beta_scale).flat()

    def qt_model(self, params) -> qtgen.QtModel:
        return qtgen.QtModel.from_flat(self.p, self.n_layers, params)

    def materialize(self, params) -> np.ndarray:
        return qtgen.generate_weights(self.qt_model(params))

    def predict(self, params, windows) -> np.ndarray:
        return self.lstm.predict(self.materialize(params), windows)

    def loss_and_grad(self, params, windows, targets) -> tuple[float, np.ndarray]:
        model = self.qt_model(params)
        kappa = qtgen.generate_weights(model)
        loss, d_kappa = self.lstm.loss_and_grad(kappa, windows, targets)
        d_gamma, d_beta = qtgen.qt_backward(model, d_kappa)
        return loss, np.concatenate([d_gamma, d_beta])


def qtlstm_backward(windows, targets, qt_model: qtgen.QtModel,
                    cfg: LstmConfig = LstmConfig()) -> tuple[np.ndarray, np.ndarray]:
    if qt_model.p != cfg.n_params:
        raise ConfigurationError(f"QT model generates {qt_model.p} weights, LSTM needs {cfg.n_params}")
    kappa = qtgen.generate_weights(qt_model)
    d_kappa = LstmModel(cfg).loss_and_grad(kappa, windows, targets)[1]
    return qtgen.qt_backward(qt_model, d_kappa)


def make_model(kind: str, *, hidden_size: int = 20, lookback: int = 8, qt_layers: int = 10,
               qlstm_layers: int = 10, qlstm_hidden: int = 4):
    kind = kind.lower().replace("-", "")
    if kind == "lstm":
        return LstmModel(LstmConfig(hidden_size, 1, lookback))
    if kind == "qlstm":
        return QlstmModel(QlstmConfig(qlstm_hidden, 1, qlstm_layers, lookback))
    if kind == "qtlstm":
        return QtLstmModel(LstmConfig(hidden_size, 1, lookback), qt_layers)
    raise ConfigurationError(f"unknown model kind {kind!r}; expected lstm, qlstm or qtlstm")
