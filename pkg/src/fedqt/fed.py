"""In-process federated averaging over opaque parameter vectors.

Only :class:`ParamBundle` objects cross the client/server boundary: a
:class:`Client` keeps its shard private and exposes nothing but :meth:`Client.train`.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, FederationError
from .rnn import mse_loss

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FedConfig:
    rounds: int = 100
    clients: int = 4
    local_epochs: int = 1
    optimizer: str = "adam"
    lr: float = 0.01
    batch_size: int = 8  # 0 means the full shard
    seed: int = 0
    workers: int = 1

    def validate(self) -> None:
        for name in ("rounds", "clients", "local_epochs", "workers"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.batch_size < 0:
            raise ConfigurationError("batch_size must be >= 0")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigurationError(f"optimizer must be one of {sorted(OPTIMIZERS)}")
        if not self.lr >= 0:
            raise ConfigurationError("lr must be a non-negative number")


@dataclass(frozen=True)
class ParamBundle:
    kind: str
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))


@dataclass(frozen=True)
class RoundRecord:
    round: int
    train_loss: float
    test_loss: float


@dataclass(frozen=True)
class Shard:
    x: np.ndarray
    y: np.ndarray

    def __len__(self):
        return len(self.y)


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = self.v = None
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class SGD:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        return params - self.lr * grad


OPTIMIZERS = {"adam": Adam, "sgd": SGD}


def partition(x, y, k: int, seed: int) -> list[Shard]:
    """Shuffle with ``seed`` and deal samples round-robin into ``k`` shards.

    ``k == 1`` returns the data untouched, in order.
    """
    x, y = np.asarray(x), np.asarray(y)
    if k < 1 or len(y) < k:
        raise ConfigurationError(f"cannot split {len(y)} samples across {k} clients")
    if k == 1:
        return [Shard(x, y)]
    order = np.random.default_rng(seed).permutation(len(y))
    return [Shard(x[order[j::k]], y[order[j::k]]) for j in range(k)]


def local_train(model, bundle: ParamBundle, shard: Shard, epochs: int, optimizer: str, lr: float,
                rng: np.random.Generator, batch_size: int = 0) -> tuple[ParamBundle, float]:
    """Run ``epochs`` passes over ``shard`` with a fresh optimizer.

    Returns the updated bundle and the loss at the last step taken.
    """
    if bundle.kind != model.kind or bundle.values.shape != (model.n_params,):
        raise ConfigurationError(f"bundle {bundle.kind}/{bundle.values.size} does not fit model {model.kind}")
    opt = OPTIMIZERS[optimizer](lr)
    params = bundle.values.copy()
    n = len(shard)
    bs = n if batch_size == 0 else min(batch_size, n)
    loss = float("nan")
    for _ in range(epochs):
        order = np.arange(n) if bs == n else rng.permutation(n)
        for start in range(0, n, bs):
            idx = order[start : start + bs]
            loss, grad = model.loss_and_grad(params, shard.x[idx], shard.y[idx])
            params = opt.step(params, grad)
    return ParamBundle(bundle.kind, params), loss


def fedavg(bundles: list[ParamBundle]) -> ParamBundle:
    """Elementwise mean, bitwise independent of the order of ``bundles``.

    Each coordinate's client values are sorted, then averaged as
    ``lo + sum(x - lo) / k``, which also returns identical inputs unchanged.
    """
    if not bundles:
        raise ConfigurationError("fedavg needs at least one bundle")
    kind, size = bundles[0].kind, bundles[0].values.shape
    for b in bundles:
        if b.kind != kind or b.values.shape != size:
            raise ConfigurationError("fedavg needs bundles of one model kind and length")
    stack = np.sort(np.stack([b.values for b in bundles]), axis=0)
    lo = stack[0]
    acc = np.zeros_like(lo)
    for row in stack:
        acc += row - lo
    return ParamBundle(kind, lo + acc / len(bundles))


class Client:
    def __init__(self, client_id: int, shard: Shard, model, cfg: FedConfig):
        self.client_id = client_id
        self._shard = shard
        self._model = model
        self._cfg = cfg

    @property
    def n_samples(self) -> int:
        return len(self._shard)

    def train(self, bundle: ParamBundle, round_idx: int) -> ParamBundle:
        rng = np.random.default_rng([self._cfg.seed, round_idx, self.client_id])
        out, loss = local_train(self._model, bundle, self._shard, self._cfg.local_epochs,
                                self._cfg.optimizer, self._cfg.lr, rng, self._cfg.batch_size)
        if not (np.isfinite(loss) and np.all(np.isfinite(out.values))):
            raise FederationError(f"non-finite local loss in round {round_idx} on client {self.client_id}")
        return out


def evaluate(model, bundle: ParamBundle, x, y) -> float:
    if len(y) == 0:
        return float("nan")
    return mse_loss(model.predict(bundle.values, x), y)


def evaluate_many(model, bundle: ParamBundle, *sets) -> list[float]:
    """Evaluate on several (x, y) sets; QT-LSTM weights are materialised once."""
    if hasattr(model, "materialize"):
        kappa = model.materialize(bundle.values)
        return [mse_loss(model.lstm.predict(kappa, x), y) if len(y) else float("nan") for x, y in sets]
    return [evaluate(model, bundle, x, y) for x, y in sets]


@dataclass
class FederationResult:
    history: list[RoundRecord]
    final: ParamBundle
    initial: ParamBundle = field(repr=False, default=None)


def initial_bundle(model, seed: int) -> ParamBundle:
    return ParamBundle(model.kind, model.init(np.random.default_rng([seed])))


def run_federation(cfg: FedConfig, model, train_set, test_set, clients_data=None,
                   init: ParamBundle | None = None) -> FederationResult:
    """Broadcast, train locally, average and evaluate, ``cfg.rounds`` times.

    ``train_set``/``test_set`` are ``(x, y)`` pairs. ``clients_data`` may supply
    explicit per-client shards; otherwise the training set is partitioned IID.
    """
    cfg.validate()
    train_x, train_y = (np.asarray(a) for a in train_set)
    test_x, test_y = (np.asarray(a) for a in test_set)
    if len(train_y) == 0:
        raise ConfigurationError("empty training set")
    shards = clients_data if clients_data is not None else partition(train_x, train_y, cfg.clients, cfg.seed)
    clients = [Client(j, s, model, cfg) for j, s in enumerate(shards)]
    glob = init if init is not None else initial_bundle(model, cfg.seed)
    start = glob
    history = []
    pool = ThreadPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    try:
        for r in range(1, cfg.rounds + 1):
            if pool is None:
                updates = [c.train(glob, r) for c in clients]
            else:
                updates = list(pool.map(lambda c, g=glob, r=r: c.train(g, r), clients))
            glob = fedavg(updates)
            train_loss, test_loss = evaluate_many(model, glob, (train_x, train_y), (test_x, test_y))
            if not np.isfinite(train_loss) or (len(test_y) and not np.isfinite(test_loss)):
                raise FederationError(f"non-finite global loss after aggregation in round {r}")
            history.append(RoundRecord(r, train_loss, test_loss))
            log.info("round %d train %.6g test %.6g", r, train_loss, test_loss)
    finally:
        if pool is not None:
            pool.shutdown()
    return FederationResult(history, glob, start)
