import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lstmcluster.lstm import (LstmModel, LstmState, TrainConfig, TrainingDivergence,
                              backward_series, batch_gradient, cell_step, flat_grad,
                              forward_inputs, forward_series, loss, objective, train)
from lstmcluster.prep import TrainingPatch


def _patches(rng, T, m, k, sid="a"):
    return [TrainingPatch(rng.normal(size=m), rng.normal(size=k), 0.0, sid, j) for j in range(T)]


def _scaled(n, m, k, seed, scale=10.0):
    base = LstmModel.init_uniform(n, m, k, seed)
    return base.with_flat(base.flat() * scale)


def fd_gradient(model, patches, l2, step=1e-5):
    theta = model.flat()
    out = np.empty_like(theta)
    for i in range(theta.size):
        up, dn = theta.copy(), theta.copy()
        up[i] += step
        dn[i] -= step
        out[i] = (objective(model.with_flat(up), patches, l2)
                  - objective(model.with_flat(dn), patches, l2)) / (2 * step)
    return out


def max_rel_error(g, fd):
    return float(np.max(np.abs(g - fd) / np.maximum(np.maximum(np.abs(g), np.abs(fd)), 1e-6)))


def test_zero_model_step():
    m = LstmModel.zeros(3, 2, 1)
    st0, h = cell_step(m, LstmState.zeros(3), np.array([0.7, -1.2]))
    assert np.array_equal(h, np.zeros(3)) and np.array_equal(st0.C, np.zeros(3))
    c = np.array([2.0, -1.0, 0.5])
    st1, h = cell_step(m, LstmState(np.zeros(3), c), np.zeros(2))
    assert np.allclose(st1.C, 0.5 * c, rtol=0, atol=1e-15)
    assert np.allclose(h, 0.5 * np.tanh(0.5 * c), rtol=0, atol=1e-15)


def test_non_finite_input():
    with pytest.raises(ValueError):
        cell_step(LstmModel.zeros(2, 1, 1), LstmState.zeros(2), np.array([np.nan]))


@given(st.integers(0, 10_000), st.floats(-1e3, 1e3), st.floats(0.1, 50))
def test_hidden_state_bounded(seed, xval, scale):
    rng = np.random.default_rng(seed)
    m = _scaled(4, 3, 2, seed, scale)
    state = LstmState.zeros(4)
    for _ in range(5):
        state, h = cell_step(m, state, xval * rng.normal(size=3))
        assert np.all(np.abs(h) <= 1)


@given(st.integers(0, 10_000))
def test_predictions_bounded_by_head_norm(seed):
    rng = np.random.default_rng(seed)
    m = _scaled(5, 3, 2, seed, 20.0)
    y = forward_inputs(m, 10 * rng.normal(size=(6, 3)))
    assert np.all(np.abs(y) <= np.abs(m.V).sum(axis=0)[None, :] + 1e-12)


def test_forward_series_basics():
    rng = np.random.default_rng(0)
    pats = _patches(rng, 4, 3, 2)
    assert np.array_equal(forward_series(LstmModel.zeros(5, 3, 2), pats), np.zeros((4, 2)))
    m = _scaled(5, 3, 2, 1)
    a = forward_series(m, pats)
    b = forward_series(m, pats[::-1])
    assert not np.allclose(a[::-1], b)
    one = forward_series(m, pats[:1])
    _, h = cell_step(m, LstmState.zeros(5), pats[0].input)
    assert np.allclose(one[0], h @ m.V, rtol=0, atol=1e-14)
    with pytest.raises(ValueError):
        forward_series(m, pats[:1] + _patches(rng, 1, 3, 2, sid="b"))


def test_loss_examples():
    assert loss([1, 2], [0, 0]) == 5
    assert loss([[1.5, 2]], [[1.5, 2]]) == 0
    rng = np.random.default_rng(1)
    pats = _patches(rng, 3, 2, 2)
    z = LstmModel.zeros(3, 2, 2)
    assert objective(z, pats, 0.7) == loss(np.zeros((3, 2)), [p.target for p in pats])


@pytest.mark.parametrize("n, m, k", list(itertools.product([1, 4, 10], [3, 7], [2, 6])))
def test_gradient_matches_finite_differences(n, m, k):
    rng = np.random.default_rng(n * 100 + m * 10 + k)
    model = _scaled(n, m, k, n + m + k, 8.0)
    pats = _patches(rng, 3, m, k)
    g = flat_grad(model, backward_series(model, pats, 0.01))
    assert max_rel_error(g, fd_gradient(model, pats, 0.01)) < 1e-4


def test_zero_loss_gives_zero_gradient():
    rng = np.random.default_rng(2)
    model = _scaled(4, 3, 2, 3)
    pats = _patches(rng, 4, 3, 2)
    preds = forward_series(model, pats)
    exact = [TrainingPatch(p.input, y, 0.0, "a", p.window_index) for p, y in zip(pats, preds)]
    g = flat_grad(model, backward_series(model, exact, 0.0))
    assert np.max(np.abs(g)) < 1e-12


def test_duplicated_series_doubles_gradient():
    rng = np.random.default_rng(3)
    model = _scaled(4, 3, 2, 4)
    X, Y = rng.normal(size=(5, 3)), rng.normal(size=(5, 2))
    l1, g1 = batch_gradient(model, [X], [Y])
    l2, g2 = batch_gradient(model, [X, X], [Y, Y])
    assert l2 == pytest.approx(2 * l1, rel=1e-12)
    for name in g1:
        assert np.allclose(g2[name], 2 * g1[name], rtol=1e-12, atol=1e-15)


def test_padding_is_exact():
    rng = np.random.default_rng(4)
    model = _scaled(3, 2, 2, 5)
    A = (rng.normal(size=(7, 2)), rng.normal(size=(7, 2)))
    B = (rng.normal(size=(2, 2)), rng.normal(size=(2, 2)))
    lab, gab = batch_gradient(model, [A[0], B[0]], [A[1], B[1]])
    la, ga = batch_gradient(model, [A[0]], [A[1]])
    lb, gb = batch_gradient(model, [B[0]], [B[1]])
    assert lab == pytest.approx(la + lb, rel=1e-12)
    for name in gab:
        assert np.allclose(gab[name], ga[name] + gb[name], rtol=1e-10, atol=1e-14)


def test_inference_state_is_per_series():
    rng = np.random.default_rng(5)
    model = _scaled(4, 3, 2, 6)
    XA, XB = rng.normal(size=(6, 3)), rng.normal(size=(4, 3))
    alone = forward_inputs(model, XA)
    forward_inputs(model, XB)
    assert np.array_equal(forward_inputs(model, XA), alone)


def test_memorizes_constant_target():
    p = [TrainingPatch(np.array([0.1, -0.2, 0.3]), np.array([0.5, 0.5]), 0.0, "s", 0)]
    history = []
    cfg = TrainConfig(cell_dim=10, epoch_size=1, minibatch_size=1, lr_per_sample=0.1,
                      max_epochs=200, noise_std=0.0, l2_weight=0.0)
    model = train([p], cfg, history=history)
    assert history[-1] < 1e-3
    assert objective(model, p) < 1e-3


def test_zero_epochs_returns_init():
    p = [TrainingPatch(np.zeros(2), np.zeros(1), 0.0, "s", 0)]
    cfg = TrainConfig(cell_dim=3, max_epochs=0, seed=9)
    model = train([p], cfg)
    ref = LstmModel.init_uniform(3, 2, 1, 9)
    assert np.array_equal(model.flat(), ref.flat())
    assert np.all(np.abs(ref.flat()) <= 0.05)


def test_training_is_deterministic():
    rng = np.random.default_rng(6)
    series = [_patches(rng, 5, 3, 2, sid=f"s{i}") for i in range(4)]
    cfg = TrainConfig(cell_dim=4, epoch_size=12, minibatch_size=2, lr_per_sample=0.01,
                      max_epochs=3, noise_std=0.01, seed=3)
    a, b = train(series, cfg), train(series, cfg)
    assert a.flat().tobytes() == b.flat().tobytes()
    c = train(series, TrainConfig(**{**cfg.to_dict(), "seed": 4}))
    assert not np.array_equal(a.flat(), c.flat())


def test_divergence_is_reported():
    p = [TrainingPatch(np.ones(2), np.full(1, 1e3), 0.0, "s", 0)]
    cfg = TrainConfig(cell_dim=2, epoch_size=1, minibatch_size=1, lr_per_sample=1e305,
                      max_epochs=50, noise_std=0.0, l2_weight=0.0)
    with pytest.raises(TrainingDivergence):
        train([p], cfg, clip_norm=np.inf)


def test_descent_on_linear_toy():
    # targets are a fixed linear map of the inputs; small steps must descend
    rng = np.random.default_rng(7)
    A = rng.normal(scale=0.3, size=(3, 2))
    series = []
    for i in range(6):
        X = rng.normal(scale=0.5, size=(8, 3))
        series.append([TrainingPatch(x, x @ A, 0.0, f"s{i}", j) for j, x in enumerate(X)])
    history = []
    cfg = TrainConfig(cell_dim=6, epoch_size=48, minibatch_size=6, lr_per_sample=0.01,
                      max_epochs=60, noise_std=0.0, l2_weight=0.0)
    train(series, cfg, history=history)
    ups = np.sum(np.diff(history) > 0)
    assert ups <= 0.05 * (len(history) - 1)
    assert history[-1] < history[0]


def test_checkpoint_round_trip(tmp_path):
    m = _scaled(3, 4, 2, 8)
    a, b = tmp_path / "a.npz", tmp_path / "b.npz"
    m.save(a)
    m.save(b)
    back = LstmModel.load(a)
    assert back.flat().tobytes() == m.flat().tobytes()
    assert a.read_bytes() == b.read_bytes()
