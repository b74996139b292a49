import numpy as np
import pytest

from eegdistract.neural import (
    FCNClassifier,
    FCNLSTMClassifier,
    ModelSpec,
    NeuralModel,
    ResNetClassifier,
    TrainConfig,
    TrainingDivergence,
    build_model,
    grad_check,
    softmax_xent,
    train_model,
)
from eegdistract.neural.gradcheck import relative_error
from eegdistract.neural.layers import LSTM, BatchNorm, Conv1D


TOY = dict(channels=5, length=12, seq_len=3, fcn_filters=(4, 6, 4), resnet_filters=(4, 6, 6),
           lstm_hidden=(5, 4))


def toy_data(kind, n=6, seed=0):
    spec = ModelSpec(kind=kind, **TOY)
    r = np.random.default_rng(seed)
    return spec, r.normal(size=(n, *spec.input_shape)), r.integers(0, 2, n)


@pytest.mark.parametrize("kind", ["FCN", "RESNET", "FCN_LSTM"])
def test_gradients_match_finite_differences(kind):
    spec, X, y = toy_data(kind)
    model = build_model(spec, seed=1)
    err, info = grad_check(model, X, y, step=1e-5, per_kind=60, return_details=True)
    assert err <= 1e-4
    assert info["checked"] > 0


def test_conv_input_gradient():
    r = np.random.default_rng(0)
    conv = Conv1D(3, 2, 4, r, input_grad=True)
    x = r.normal(size=(2, 7, 3))
    g = r.normal(size=(2, 7, 2))
    conv.forward(x, training=True)
    dx = conv.backward(g)
    num = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += 1e-6
        xm[idx] -= 1e-6
        num[idx] = ((conv.forward(xp, True) * g).sum() - (conv.forward(xm, True) * g).sum()) / 2e-6
    assert np.allclose(dx, num, rtol=1e-6, atol=1e-8)


def test_lstm_input_gradient():
    r = np.random.default_rng(0)
    lstm = LSTM(3, 4, r)
    x = r.normal(size=(2, 5, 3))
    g = r.normal(size=(2, 5, 4))
    lstm.forward(x, training=True)
    dx = lstm.backward(g)
    idx = (1, 2, 0)
    xp, xm = x.copy(), x.copy()
    xp[idx] += 1e-6
    xm[idx] -= 1e-6
    num = ((lstm.forward(xp, True) * g).sum() - (lstm.forward(xm, True) * g).sum()) / 2e-6
    assert relative_error(dx[idx], num) < 1e-6


def test_batchnorm_needs_statistics():
    bn = BatchNorm(3)
    with pytest.raises(RuntimeError):
        bn.forward(np.zeros((2, 4, 3)), training=False)


def test_softmax_xent_gradient():
    logits = np.array([[2.0, -1.0], [0.5, 0.5]])
    p, loss, d = softmax_xent(logits, np.array([0, 1]))
    assert np.allclose(p.sum(axis=1), 1)
    assert loss == pytest.approx(-(np.log(p[0, 0]) + np.log(p[1, 1])) / 2)
    assert np.allclose(d, (p - np.eye(2)[[0, 1]]) / 2)


def test_relative_error_floor():
    assert relative_error(0.0, 1e-9) < 1e-2
    assert relative_error(1.0, 1.0) == 0


@pytest.mark.parametrize("kind", ["FCN", "RESNET", "FCN_LSTM"])
def test_overfits_toy_set(kind):
    spec, X, y = toy_data(kind, n=8, seed=3)
    y = np.array([0, 1] * 4)
    model = build_model(spec, seed=0)
    hist = train_model(model, X, y, config=TrainConfig(batch_size=8, max_epochs=200, lr=1e-2))
    assert max(hist["train_acc"]) == 1.0


def test_early_stopping_restores_best():
    spec, X, y = toy_data("FCN", n=16)
    model = build_model(spec, seed=0)
    hist = train_model(model, X[:8], y[:8], X[8:], y[8:],
                       TrainConfig(batch_size=4, max_epochs=30, lr=5e-2, patience=3))
    assert len(hist["val_loss"]) <= 30
    best = hist["best_epoch"]
    from eegdistract.neural.training import evaluate
    assert evaluate(model, X[8:], y[8:])[0] == pytest.approx(hist["val_loss"][best], rel=1e-12)


def test_divergence_raises():
    spec, X, y = toy_data("FCN")
    X[0, 0, 0] = np.nan
    with pytest.raises(TrainingDivergence):
        train_model(build_model(spec), X, y, config=TrainConfig(max_epochs=1))


@pytest.mark.parametrize("kind", ["FCN", "RESNET", "FCN_LSTM"])
def test_serialization_roundtrip(tmp_path, kind):
    spec, X, y = toy_data(kind)
    model = build_model(spec, seed=2)
    train_model(model, X, y, config=TrainConfig(batch_size=3, max_epochs=2))
    model.save(tmp_path / "m.edn")
    back = NeuralModel.load(tmp_path / "m.edn")
    assert back.spec == spec
    assert np.abs(back.predict_proba(X) - model.predict_proba(X)).max() <= 1e-15
    assert back.history["train_loss"] == model.history["train_loss"]


def test_load_rejects_garbage(tmp_path):
    (tmp_path / "bad.edn").write_bytes(b"NOPE" + bytes(20))
    with pytest.raises(ValueError):
        NeuralModel.load(tmp_path / "bad.edn")


@pytest.mark.parametrize("cls,ndim,arch", [
    (FCNClassifier, 3, dict(fcn_filters=(3, 4, 3))),
    (ResNetClassifier, 3, dict(resnet_filters=(3, 4, 4))),
    (FCNLSTMClassifier, 4, dict(fcn_filters=(3, 4, 3), lstm_hidden=(3, 3))),
])
def test_estimators_fit_predict(cls, ndim, arch):
    r = np.random.default_rng(0)
    shape = (10, 3, 8, 4) if ndim == 4 else (10, 8, 4)
    X = r.normal(size=shape)
    y = np.array([0, 1] * 5)
    est = cls(max_epochs=3, batch_size=5, **arch)
    est.fit(X, y, X[:4], y[:4])
    p = est.predict_proba(X)
    assert p.shape == (10, 2) and np.allclose(p.sum(axis=1), 1)
    assert np.array_equal(est.predict(X), (p[:, 1] >= p[:, 0]).astype(int))
    assert len(est.history_["train_loss"]) >= 1
    # per-sample scoring: order and batch composition never change a prediction
    assert np.array_equal(est.predict_proba(X[::-1])[::-1], p)
    with pytest.raises(ValueError):
        est.predict(X[..., :3])


def test_gap_time_permutation_invariant():
    from eegdistract.neural.layers import GlobalAvgPool

    x = np.random.default_rng(0).normal(size=(2, 9, 3))
    gap = GlobalAvgPool()
    perm = np.array([8, 0, 3, 1, 2, 7, 6, 5, 4])
    a = gap.forward(x, False)
    b = gap.forward(x[:, perm], False)
    assert np.allclose(a, b, rtol=0, atol=1e-15)


@pytest.mark.parametrize("kind", ["FCN", "RESNET", "FCN_LSTM"])
def test_outputs_finite_and_normalized(kind):
    spec, X, y = toy_data(kind)
    model = build_model(spec, seed=0)
    X = X * 1e3
    _, loss = model.loss_and_grads(X, y)
    assert np.isfinite(loss)
    assert all(np.all(np.isfinite(l.grads[k])) for _, l, k in model.named_params())
    p = model.predict_proba(X)
    assert np.all(np.isfinite(p)) and np.abs(p.sum(axis=1) - 1).max() <= 1e-12


def test_training_is_deterministic():
    spec, X, y = toy_data("FCN_LSTM")
    states = []
    for _ in range(2):
        m = build_model(spec, seed=5)
        train_model(m, X, y, X[:2], y[:2], TrainConfig(seed=1, batch_size=3, max_epochs=3))
        states.append(m.get_state())
    assert states[0].keys() == states[1].keys()
    assert all(np.array_equal(states[0][k], states[1][k]) for k in states[0])
