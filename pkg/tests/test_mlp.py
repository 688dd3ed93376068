import math

import numpy as np
import pytest

from rssloc.channel import PlmParams
from rssloc.dataset import NormStats, SplitSpec, generate_synthetic, split
from rssloc.estimators import DnnEstimator
from rssloc.evaluation import evaluate
from rssloc.mlp import (
    AdamState,
    MlpArch,
    MlpModel,
    TrainConfig,
    adam_step,
    backward,
    elu,
    forward,
    init_xavier,
    load_model,
    loss,
    save_model,
    train,
)
from rssloc.scenario import Track, make_track

from oracles import max_rel_error, numeric_grad


def _model(arch, params):
    return MlpModel.from_params(arch, [np.array(p, dtype=float) for p in params],
                                NormStats.identity(arch.input_dim))


def test_elu_values():
    assert elu(0.0) == 0.0
    assert elu(2.0) == 2.0
    assert elu(-1.0, 1.0) == pytest.approx(-0.6321205588285577, abs=1e-15)
    assert elu(-1.0, 0.5) == pytest.approx(0.5 * (math.exp(-1) - 1))
    assert elu(-1e-12) == pytest.approx(0.0, abs=1e-11)


def test_xavier_init(rng):
    arch = MlpArch(input_dim=128, hidden_layers=1, hidden_units=128, output_dim=2)
    m = init_xavier(arch, rng)
    w = m.weights[0]
    assert w.shape == (128, 128)
    target = 2.0 / (128 + 128)
    assert abs(w.var() / target - 1) < 0.10
    assert np.max(np.abs(w)) <= math.sqrt(6 / 256)
    assert all(np.all(b == 0) for b in m.biases)
    m2 = init_xavier(arch, np.random.default_rng(12345))
    assert m == m2


def test_forward_zero_model():
    arch = MlpArch(6, 2, 8, 2)
    m = _model(arch, [np.zeros_like(p) for p in init_xavier(arch, np.random.default_rng(0)).params])
    assert np.array_equal(forward(m, np.arange(6.0)), [0.0, 0.0])


def test_forward_affine():
    arch = MlpArch(2, hidden_layers=0, output_dim=2)
    m = _model(arch, [np.eye(2), [1.0, 1.0]])
    assert np.array_equal(forward(m, [1.0, 2.0]), [2.0, 3.0])


def test_forward_hand_evaluated():
    # z = (1*1 + -2*0.5 + 0, 1*-1 + -2*1 + 0.5) = (0, -2.5); a = (0, e^-2.5 - 1)
    arch = MlpArch(2, hidden_layers=1, hidden_units=2, output_dim=2)
    m = _model(arch, [[[1.0, -1.0], [0.5, 1.0]], [0.0, 0.5], [[2.0, 0.0], [1.0, -3.0]], [0.1, 0.2]])
    out = forward(m, [1.0, -2.0])
    assert out == pytest.approx([-0.8179150013761012, 2.9537450041283036], abs=1e-14)


def test_forward_dimension_mismatch():
    m = init_xavier(MlpArch(6, 1, 4), np.random.default_rng(0))
    with pytest.raises(ValueError):
        forward(m, np.zeros(5))


def test_forward_batch_order_independent(rng):
    m = init_xavier(MlpArch(6, 2, 16), rng)
    x = rng.normal(size=(20, 6))
    perm = rng.permutation(20)
    assert np.array_equal(forward(m, x)[perm], forward(m, x[perm]))
    assert np.allclose(forward(m, x)[3], forward(m, x[3]), rtol=0, atol=1e-13)


def test_loss_examples():
    arch = MlpArch(2, hidden_layers=0, output_dim=2)
    m = _model(arch, [np.zeros((2, 2)), [0.0, 0.0]])
    assert loss(m, [[1.0, 1.0]], [[0.0, 0.0]]) == 0.0
    assert loss(m, [[1.0, 1.0]], [[-3.0, -4.0]]) == 12.5
    # one non-zero weight w=2 that does not affect the prediction (input feature is 0)
    m = _model(arch, [[[0.0, 0.0], [2.0, 0.0]], [0.0, 0.0]])
    assert loss(m, [[1.0, 0.0]], [[0.0, 0.0]], lam=0.01) == pytest.approx(0.02, abs=1e-15)


def test_backward_zero_error_zero_grad(rng):
    m = init_xavier(MlpArch(6, 2, 8), rng)
    x = rng.normal(size=(5, 6))
    u = forward(m, x)
    assert all(np.all(g == 0) for g in backward(m, x, u))
    lam = 0.3
    for g, p in zip(backward(m, x, u, lam), m.params):
        assert np.allclose(g, lam / 5 * p, rtol=0, atol=1e-15)


@pytest.mark.parametrize("lam", [0.0, 0.01])
def test_gradient_check_6_8_2(lam):
    rng = np.random.default_rng(77)
    m = init_xavier(MlpArch(6, 1, 8), rng)
    for p in m.biases:
        p += rng.normal(0, 0.3, p.shape)
    x = rng.normal(size=(10, 6))
    u = rng.normal(0, 2, size=(10, 2))
    num = numeric_grad(lambda: loss(m, x, u, lam), m.params)
    assert max_rel_error(backward(m, x, u, lam), num) < 1e-6


def test_adam_first_step_is_signed_lr():
    arch = MlpArch(2, hidden_layers=0, output_dim=2)
    m = _model(arch, [[[0.5, -1.0], [2.0, 0.0]], [0.1, 0.2]])
    g = [np.array([[0.3, -2.0], [1e-3, -5.0]]), np.array([7.0, -0.01])]
    new, state = adam_step(AdamState.zeros_like(m.params), m, g, 1e-3)
    for p_new, p_old, gi in zip(new.params, m.params, g):
        assert np.allclose(p_new - p_old, -1e-3 * np.sign(gi), rtol=1e-4, atol=0)
    assert state.step == 1
    assert m.weights[0][0, 0] == 0.5  # input untouched


def test_adam_zero_gradient():
    arch = MlpArch(2, hidden_layers=0, output_dim=2)
    m = _model(arch, [[[0.5, -1.0], [2.0, 0.0]], [0.1, 0.2]])
    state = AdamState.zeros_like(m.params)
    zeros = [np.zeros_like(p) for p in m.params]
    cur = m
    for _ in range(5):
        cur, state = adam_step(state, cur, zeros, 0.1)
    assert cur == m


def test_adam_two_step_scalar_trace():
    # independent scalar Adam: p=1.0, g1=0.5, g2=-0.25, lr=0.1
    b1, b2, eps, lr = 0.9, 0.999, 1e-8, 0.1
    p, m_, v = 1.0, 0.0, 0.0
    for t, gs in enumerate([0.5, -0.25], start=1):
        m_ = b1 * m_ + (1 - b1) * gs
        v = b2 * v + (1 - b2) * gs * gs
        p -= lr * (m_ / (1 - b1**t)) / (math.sqrt(v / (1 - b2**t)) + eps)
    arch = MlpArch(1, hidden_layers=0, output_dim=1)
    model = _model(arch, [[[1.0]], [0.0]])
    state = AdamState.zeros_like(model.params)
    for gs in (0.5, -0.25):
        model, state = adam_step(state, model, [np.array([[gs]]), np.zeros(1)], lr)
    assert model.weights[0][0, 0] == pytest.approx(p, abs=1e-15)


def _toy(corridor, n, seed, sigma2=11.83):
    rng = np.random.default_rng(seed)
    pos = np.column_stack([rng.uniform(9, 79.32, n), rng.choice([0.8, 1.2, 1.4, 1.8], n), np.full(n, 0.5)])
    return generate_synthetic(corridor, PlmParams(sigma2_db=sigma2), Track(tuple(map(tuple, pos))), rng)


def test_train_descends(corridor):
    ds = _toy(corridor, 50, 0)
    cfg = TrainConfig(batch_size=10, max_epochs=200, patience=200, lam=0.01)
    _, log = train(ds, cfg, MlpArch(6), np.random.default_rng(0))
    assert log.train_loss[-1] < log.initial_train_loss


def test_train_overfits_ten_samples(corridor):
    ds = _toy(corridor, 10, 1)
    cfg = TrainConfig(batch_size=2, max_epochs=2000, patience=2000, lam=0.0, restore_best=False)
    m, log = train(ds, cfg, MlpArch(6), np.random.default_rng(1))
    assert log.train_loss[-1] < 1e-2


def test_train_deterministic(corridor):
    ds = _toy(corridor, 60, 2)
    cfg = TrainConfig(batch_size=8, max_epochs=30, patience=5)
    m1, l1 = train(ds, cfg, MlpArch(6, 2, 16), np.random.default_rng(5))
    m2, l2 = train(ds, cfg, MlpArch(6, 2, 16), np.random.default_rng(5))
    assert l1 == l2
    assert m1 == m2


def test_early_stopping_returns_best_snapshot(corridor):
    ds = _toy(corridor, 80, 3)
    cfg = TrainConfig(batch_size=8, max_epochs=400, patience=10, learning_rate=3e-3)
    m, log = train(ds, cfg, MlpArch(6, 2, 32), np.random.default_rng(3))
    assert log.epochs - 1 - log.best_epoch == 10 or log.epochs == 400
    best = log.val_loss[log.best_epoch]
    assert all(best <= v for v in log.val_loss)
    # recompute validation loss of the returned model on the same held-out rows
    perm = np.random.default_rng(3).permutation(len(ds))
    n_val = round(0.2 * len(ds))
    val = perm[len(ds) - n_val:]
    pred = m.predict(ds.rss[val])
    assert 0.5 * np.sum((pred - ds.positions[val, :2]) ** 2) / n_val == pytest.approx(best, rel=1e-12)


def test_l2_shrinks_weights(corridor):
    ds = _toy(corridor, 40, 4)
    norms = {}
    for lam in (0.0, 0.01):
        cfg = TrainConfig(batch_size=8, max_epochs=100, patience=100, lam=lam, restore_best=False)
        m, _ = train(ds, cfg, MlpArch(6, 2, 16), np.random.default_rng(9))
        norms[lam] = math.sqrt(sum(float(np.sum(w * w)) for w in m.weights))
    assert norms[0.01] <= norms[0.0] * (1 + 1e-6)


def test_train_rejects_small_dataset(corridor):
    with pytest.raises(ValueError):
        train(_toy(corridor, 10, 0), TrainConfig())


def test_model_file_roundtrip(tmp_path, corridor):
    ds = _toy(corridor, 40, 5)
    m, _ = train(ds, TrainConfig(batch_size=8, max_epochs=3), MlpArch(6, 2, 8), np.random.default_rng(0))
    save_model(m, tmp_path / "m.bin")
    back = load_model(tmp_path / "m.bin")
    assert back == m
    assert back.norm == m.norm


@pytest.mark.slow
def test_learns_noiseless_track(corridor):
    track = make_track(corridor, 9.0, 79.32, 0.24, [0.8, 1.2, 1.4, 1.8])
    ds = generate_synthetic(corridor, PlmParams(sigma2_db=0.0), track, np.random.default_rng(0))
    tr, te = split(ds, SplitSpec(0.75, 0))
    model, _ = train(tr, TrainConfig(seed=0), MlpArch(6), np.random.default_rng(0))
    assert evaluate(DnnEstimator(corridor, model), te, planar=True).mean < 0.5
