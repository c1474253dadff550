import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from neuromia.ann import (
    TrainConfig,
    accuracy,
    mlp_backward,
    mlp_forward,
    per_example_grads,
    predict,
    train_ann,
)
from neuromia.data import make_split_plan
from neuromia.numeric import SeededRng, ShapeError
from neuromia.optim import AdamState, MlpParams, adam_step, init_params
from oracles import numeric_grad, rel_error


def toy(seed, d=4, h=3, c=2, n=5):
    r = SeededRng(seed)
    p = init_params(r, d, h, c)
    p = MlpParams(p.W1, r.standard_normal(h) * 0.1, p.W2, r.standard_normal(c) * 0.1)
    x = r.standard_normal((n, d))
    y = np.array([r.integer(c) for _ in range(n)])
    return p, x, y


def ann_fd_error(seed, d, h, c):
    p, x, y = toy(seed, d, h, c)
    _, cache = mlp_forward(p, x)
    _, grads = mlp_backward(cache, y)

    def loss():
        _, cc = mlp_forward(p, x)
        return mlp_backward(cc, y)[0]

    return max(rel_error(grads.arrays()[k], numeric_grad(loss, v, 1e-5)) for k, v in p.arrays().items())


def test_fd_gradient_small_net():
    assert ann_fd_error(0, 4, 3, 2) < 1e-5


@given(st.integers(0, 10_000), st.integers(1, 6), st.integers(1, 6), st.integers(2, 6))
@settings(max_examples=20, deadline=None)
def test_fd_gradient_random_nets(seed, d, h, c):
    assert ann_fd_error(seed, d, h, c) < 1e-5


def test_zero_params_give_zero_logits():
    p = MlpParams(np.zeros((3, 4)), np.zeros(4), np.zeros((4, 2)), np.zeros(2))
    logits, _ = mlp_forward(p, np.ones((5, 3)))
    assert np.all(logits == 0)


def test_dead_relu_region_gives_bias():
    p = MlpParams(np.ones((2, 3)), -np.full(3, 10.0), np.ones((3, 2)), np.array([0.5, -0.5]))
    logits, _ = mlp_forward(p, np.ones((4, 2)))
    assert np.all(logits == [0.5, -0.5])


def test_forward_shape_error():
    p = init_params(SeededRng(0), 3, 4, 2)
    with pytest.raises(ShapeError):
        mlp_forward(p, np.ones((2, 5)))


def test_confident_logits_small_loss():
    p = MlpParams(np.eye(2), np.zeros(2), np.eye(2) * 100, np.zeros(2))
    _, cache = mlp_forward(p, np.array([[1.0, 0.0], [0.0, 1.0]]))
    loss, grads = mlp_backward(cache, np.array([0, 1]))
    assert loss < 1e-40 and all(np.abs(g).max() < 1e-40 for g in grads.arrays().values())


def test_duplicated_batch_leaves_mean_loss_and_grads():
    p, x, y = toy(3)
    l1, g1 = mlp_backward(mlp_forward(p, x)[1], y)
    l2, g2 = mlp_backward(mlp_forward(p, np.vstack([x, x]))[1], np.concatenate([y, y]))
    assert abs(l1 - l2) < 1e-12
    assert np.max(np.abs(g1.flatten() - g2.flatten())) < 1e-12


def test_per_example_grads_average_to_batch_grad():
    p, x, y = toy(4, 5, 6, 3, n=7)
    per = per_example_grads(p, x, y)
    _, g = mlp_backward(mlp_forward(p, x)[1], y)
    assert np.max(np.abs(per.mean(axis=0) - g.flatten())) < 1e-10


def test_adam_zero_gradient_keeps_params():
    p, _, _ = toy(0)
    zero = p.map(np.zeros_like)
    out, state = adam_step(p, zero, AdamState.for_params(p))
    assert np.array_equal(out.flatten(), p.flatten()) and state.t == 1


def test_adam_first_step_closed_form():
    p, _, _ = toy(1)
    g = p.map(lambda a: np.linspace(-3, 3, a.size).reshape(a.shape) + 0.01)
    out, _ = adam_step(p, g, AdamState.for_params(p, lr=1e-3))
    gf = g.flatten()
    # m_hat = g, v_hat = g^2 on the first step
    expected = p.flatten() - 1e-3 * gf / (np.abs(gf) + 1e-8)
    assert np.max(np.abs(out.flatten() - expected)) < 1e-15
    assert np.all(np.abs(np.abs(out.flatten() - p.flatten()) - 1e-3) < 1e-6)


def test_adam_deterministic_and_second_moment_nonnegative():
    def run():
        p, x, y = toy(5)
        st_ = AdamState.for_params(p)
        for _ in range(10):
            _, g = mlp_backward(mlp_forward(p, x)[1], y)
            p, st_ = adam_step(p, g, st_)
        return p, st_

    (a, sa), (b, _) = run(), run()
    assert np.array_equal(a.flatten(), b.flatten())
    assert np.all(sa.v.flatten() >= 0)


def test_params_stay_finite_over_many_steps():
    r = SeededRng(6)
    p = init_params(r, 8, 16, 3)
    st_ = AdamState.for_params(p)
    for _ in range(1000):
        x = r.standard_normal((8, 8)) * 5
        y = np.array([r.integer(3) for _ in range(8)])
        _, g = mlp_backward(mlp_forward(p, x)[1], y)
        p, st_ = adam_step(p, g, st_)
    assert np.all(np.isfinite(p.flatten()))


def test_accuracy_invariant_to_row_order():
    p, x, y = toy(7, n=20)
    perm = SeededRng(1).uniform(20).argsort()
    assert accuracy(p, x, y) == accuracy(p, x[perm], y[perm])
    assert np.array_equal(predict(p, x)[perm], predict(p, x[perm]))


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)


def test_training_deterministic(iris):
    plan = make_split_plan(iris, 0.2, 0)
    cfg = TrainConfig(epochs=2, seed=3)
    a = train_ann(iris, plan.target_train, plan.target_test, cfg)
    b = train_ann(iris, plan.target_train, plan.target_test, cfg)
    assert np.array_equal(a.params.flatten(), b.params.flatten())


def test_iris_accuracy_and_loss_trend(iris):
    results = []
    for s in range(5):
        plan = make_split_plan(iris, 0.2, s)
        results.append(train_ann(iris, plan.target_train, plan.target_test, TrainConfig(seed=s)))
    assert np.median([r.test_acc for r in results]) >= 0.90
    assert np.median([r.epoch_losses[4] - r.epoch_losses[0] for r in results]) < 0


def test_breast_cancer_accuracy(wdbc):
    accs = []
    for s in range(3):
        plan = make_split_plan(wdbc, 0.2, s)
        accs.append(train_ann(wdbc, plan.target_train, plan.target_test, TrainConfig(seed=s)).test_acc)
    assert np.median(accs) >= 0.92
