import inspect

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fedqt import fed, gwdata, rnn
from fedqt.errors import ConfigurationError, FederationError


def bundle(values, kind="lstm"):
    return fed.ParamBundle(kind, np.asarray(values, dtype=float))


def small_data(n=24, w=4, seed=0):
    rng = np.random.default_rng(seed)
    return rng.uniform(-0.8, 0.8, (n, w)), rng.uniform(-0.8, 0.8, n)


def test_partition_examples():
    x, y = small_data(8)
    shards = fed.partition(x, y, 4, seed=1)
    assert [len(s) for s in shards] == [2, 2, 2, 2]
    one = fed.partition(x, y, 1, seed=1)
    np.testing.assert_array_equal(one[0].y, y)
    with pytest.raises(ConfigurationError):
        fed.partition(x[:3], y[:3], 4, seed=1)


@settings(max_examples=100, deadline=None)
@given(n=st.integers(1, 60), k=st.integers(1, 8), seed=st.integers(0, 10 ** 6))
def test_partition_is_a_partition(n, k, seed):
    if n < k:
        return
    x = np.arange(n, dtype=float)[:, None]
    shards = fed.partition(x, np.arange(n, dtype=float), k, seed)
    ids = [set(s.y.astype(int).tolist()) for s in shards]
    assert set().union(*ids) == set(range(n))
    assert sum(len(s) for s in ids) == n
    sizes = [len(s) for s in shards]
    assert max(sizes) - min(sizes) <= 1
    for s in shards:
        np.testing.assert_array_equal(s.x[:, 0], s.y)


def test_fedavg_examples():
    a = bundle([0.1, -3.0, 7.25])
    assert fed.fedavg([a, a, a]).values.tobytes() == a.values.tobytes()
    np.testing.assert_array_equal(fed.fedavg([bundle(np.zeros(5)), bundle(np.full(5, 2.0))]).values, np.ones(5))
    with pytest.raises(ConfigurationError):
        fed.fedavg([])
    with pytest.raises(ConfigurationError):
        fed.fedavg([a, bundle([1.0, 2.0])])
    with pytest.raises(ConfigurationError):
        fed.fedavg([a, bundle([1.0, 2.0, 3.0], "qlstm")])


@settings(max_examples=200, deadline=None)
@given(k=st.integers(1, 7), size=st.integers(1, 20), seed=st.integers(0, 10 ** 6))
def test_fedavg_algebra(k, size, seed):
    rng = np.random.default_rng(seed)
    bs = [bundle(rng.normal(scale=10, size=size)) for _ in range(k)]
    avg = fed.fedavg(bs)
    perm = [bs[i] for i in rng.permutation(k)]
    assert fed.fedavg(perm).values.tobytes() == avg.values.tobytes()
    same = [bs[0]] * k
    assert fed.fedavg(same).values.tobytes() == bs[0].values.tobytes()
    a = float(rng.uniform(-5, 5))
    scaled = fed.fedavg([bundle(a * b.values) for b in bs]).values
    np.testing.assert_allclose(scaled, a * avg.values, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(avg.values, np.mean([b.values for b in bs], axis=0), rtol=1e-12, atol=1e-12)


def test_local_train_zero_lr_and_zero_residual():
    model = rnn.LstmModel(rnn.LstmConfig(3, 1, 4))
    x, y = small_data()
    b0 = fed.ParamBundle("lstm", model.init(np.random.default_rng(0)))
    out, _ = fed.local_train(model, b0, fed.Shard(x, y), 1, "adam", 0.0, np.random.default_rng(1))
    assert out.values.tobytes() == b0.values.tobytes()
    exact = fed.Shard(x, model.predict(b0.values, x))
    out, _ = fed.local_train(model, b0, exact, 1, "sgd", 0.1, np.random.default_rng(1))
    np.testing.assert_array_equal(out.values, b0.values)
    with pytest.raises(ConfigurationError):
        fed.local_train(model, fed.ParamBundle("qlstm", b0.values), exact, 1, "sgd", 0.1, np.random.default_rng(1))


def test_local_train_equals_direct_adam_step():
    model = rnn.LstmModel(rnn.LstmConfig(3, 1, 4))
    x, y = small_data()
    p0 = model.init(np.random.default_rng(2))
    out, _ = fed.local_train(model, fed.ParamBundle("lstm", p0), fed.Shard(x, y), 1, "adam", 0.01,
                             np.random.default_rng(3))
    _, g = model.loss_and_grad(p0, x, y)
    m = 0.1 * g
    v = 0.001 * g * g
    direct = p0 - 0.01 * (m / 0.1) / (np.sqrt(v / 0.001) + 1e-8)
    np.testing.assert_allclose(out.values, direct, rtol=0, atol=1e-15)
    fed_res = fed.run_federation(fed.FedConfig(rounds=1, clients=1, lr=0.01, seed=4, batch_size=0),
                                 model, (x, y), (x, y), init=fed.ParamBundle("lstm", p0))
    assert fed_res.final.values.tobytes() == out.values.tobytes()


def test_minibatches_cover_shard_each_epoch():
    model = rnn.LstmModel(rnn.LstmConfig(2, 1, 3))
    x, y = small_data(10, 3)
    calls = []
    orig = model.loss_and_grad

    def spy(p, xb, yb):
        calls.append(len(yb))
        return orig(p, xb, yb)

    model.loss_and_grad = spy
    fed.local_train(model, fed.ParamBundle("lstm", model.init(np.random.default_rng(0))), fed.Shard(x, y),
                    2, "adam", 0.01, np.random.default_rng(0), batch_size=4)
    assert calls == [4, 4, 2, 4, 4, 2]


def centralized(model, p0, x, y, rounds, lr):
    """Same schedule without any federation machinery."""
    p = p0.copy()
    hist = []
    for _ in range(rounds):
        opt = fed.Adam(lr)
        _, g = model.loss_and_grad(p, x, y)
        p = opt.step(p, g)
        hist.append(rnn.mse_loss(model.predict(p, x), y))
    return p, hist


@pytest.mark.parametrize("kind", ["lstm", "qtlstm"])
def test_identical_shards_equal_centralized(kind):
    model = rnn.make_model(kind, hidden_size=3, lookback=4, qt_layers=2)
    x, y = small_data(16)
    cfg = fed.FedConfig(rounds=5, clients=4, lr=0.02, seed=7, batch_size=0)
    res = fed.run_federation(cfg, model, (x, y), (x, y), clients_data=[fed.Shard(x, y)] * 4)
    p, hist = centralized(model, res.initial.values, x, y, 5, 0.02)
    assert res.final.values.tobytes() == p.tobytes()
    assert [r.train_loss for r in res.history] == hist


def test_parallel_clients_deterministic():
    model = rnn.make_model("qtlstm", hidden_size=3, lookback=4, qt_layers=2)
    x, y = small_data(30)
    base = dict(rounds=4, clients=3, lr=0.02, seed=9, batch_size=4)
    serial = fed.run_federation(fed.FedConfig(**base, workers=1), model, (x, y), (x, y))
    parallel = fed.run_federation(fed.FedConfig(**base, workers=3), model, (x, y), (x, y))
    assert serial.final.values.tobytes() == parallel.final.values.tobytes()
    assert serial.history == parallel.history


def test_history_contract():
    model = rnn.LstmModel(rnn.LstmConfig(3, 1, 4))
    x, y = small_data()
    res = fed.run_federation(fed.FedConfig(rounds=7, clients=2, seed=1), model, (x[:16], y[:16]), (x[16:], y[16:]))
    assert [r.round for r in res.history] == list(range(1, 8))
    assert all(r.train_loss >= 0 and r.test_loss >= 0 for r in res.history)


def test_zero_lr_keeps_initial_loss():
    model = rnn.LstmModel(rnn.LstmConfig(3, 1, 4))
    x, y = small_data()
    res = fed.run_federation(fed.FedConfig(rounds=1, clients=1, lr=0.0, seed=3), model, (x, y), (x, y))
    assert res.history[0].train_loss == rnn.mse_loss(model.predict(res.initial.values, x), y)


def test_non_finite_loss_names_round_and_client():
    model = rnn.LstmModel(rnn.LstmConfig(2, 1, 3))
    x, y = small_data(8, 3)
    y = y.copy()
    y[5] = np.inf
    with np.errstate(invalid="ignore"), pytest.raises(FederationError, match=r"round 1 on client \d"):
        fed.run_federation(fed.FedConfig(rounds=2, clients=2, seed=0), model, (x, y), (x, y))


def test_config_validation():
    for bad in (dict(rounds=0), dict(clients=0), dict(local_epochs=0), dict(optimizer="rmsprop"),
                dict(lr=-1.0), dict(batch_size=-2)):
        with pytest.raises(ConfigurationError):
            fed.FedConfig(**bad).validate()


def test_client_api_exposes_no_data():
    public = {n for n in dir(fed.Client) if not n.startswith("_")}
    assert public == {"train", "n_samples"}
    sig = inspect.signature(fed.Client.train)
    assert list(sig.parameters) == ["self", "bundle", "round_idx"]
    shard = fed.Shard(*small_data(4))
    c = fed.Client(0, shard, rnn.LstmModel(rnn.LstmConfig(2, 1, 4)), fed.FedConfig())
    out = c.train(fed.ParamBundle("lstm", np.zeros(c._model.n_params)), 1)
    assert isinstance(out, fed.ParamBundle)


def test_qtlstm_short_run_on_setting1_is_finite():
    d = gwdata.make_dataset(gwdata.synthesize(gwdata.default_spec(1)))
    model = rnn.make_model("qtlstm", qt_layers=2)
    res = fed.run_federation(fed.FedConfig(rounds=3, seed=1), model, (d.train_x, d.train_y), (d.test_x, d.test_y))
    assert len(res.history) == 3
    assert all(np.isfinite([r.train_loss, r.test_loss]).all() for r in res.history)
    assert res.final.values.size == 11 * 2 + 13
