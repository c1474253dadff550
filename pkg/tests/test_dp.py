import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import optimize

from neuromia.ann import TrainConfig, mlp_backward, mlp_forward, per_example_grads as ann_pe
from neuromia.data import make_split_plan
from neuromia.dp import (
    DEFAULT_ORDERS,
    CalibrationError,
    DpConfig,
    calibrate_sigma,
    clip_gradient,
    clip_rows,
    noisy_aggregate,
    poisson_sample,
    rdp_epsilon,
    rdp_per_step,
    train_dpsgd,
)
from neuromia.numeric import SeededRng, derive_seed
from neuromia.optim import init_params, sgd_step
from neuromia.snn import LifConfig, per_example_grads as snn_pe, snn_backward, snn_forward
from oracles import gaussian_eps_dense, quadrature_epsilon


# -- clipping ------------------------------------------------------------------


def test_clip_examples():
    g = np.array([6.0, 8.0])
    out = clip_gradient(g, 1.0)
    assert np.linalg.norm(out) == pytest.approx(1.0)
    assert np.allclose(out / np.linalg.norm(out), g / 10.0)
    small = np.array([0.3, 0.4])
    assert np.array_equal(clip_gradient(small, 1.0), small)
    with pytest.raises(ValueError):
        clip_gradient(g, 0.0)


def test_clip_random_sweep():
    r = SeededRng(0)
    g = r.standard_normal((1000, 50)) * np.exp(r.uniform((1000, 1)) * 8 - 4)
    for c in (0.1, 1.0, 5.0):
        out = clip_rows(g, c)
        assert np.all(np.linalg.norm(out, axis=1) <= c + 1e-12)
        single = np.array([clip_gradient(row, c) for row in g])
        assert np.allclose(out, single, rtol=1e-13, atol=0)


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=20), st.floats(1e-3, 1e3))
def test_clip_direction_preserved(values, c):
    g = np.array(values)
    out = clip_gradient(g, c)
    assert np.linalg.norm(out) <= c * (1 + 1e-12)
    # out is a non-negative rescaling of g
    assert np.allclose(out * np.linalg.norm(g), g * np.linalg.norm(out), atol=1e-9)


# -- sampling ---------------------------------------------------------------------


def test_poisson_extremes_and_size():
    r = SeededRng(1)
    assert poisson_sample(100, 0.0, r).size == 0
    assert np.array_equal(poisson_sample(100, 1.0, r), np.arange(100))
    k = poisson_sample(10_000, 0.1, SeededRng(2)).size
    assert abs(k - 1000) <= 4 * math.sqrt(10_000 * 0.1 * 0.9)
    with pytest.raises(ValueError):
        poisson_sample(10, 1.5, r)


def test_poisson_inclusion_uniform_across_indices():
    r = SeededRng(3)
    hits = np.zeros(20)
    for _ in range(5000):
        hits[poisson_sample(20, 0.3, r)] += 1
    assert np.all(np.abs(hits / 5000 - 0.3) < 4 * math.sqrt(0.3 * 0.7 / 5000))


# -- noisy aggregation -----------------------------------------------------------


def test_aggregate_without_noise():
    g = SeededRng(4).standard_normal((7, 5))
    assert np.allclose(noisy_aggregate(g, 0.0, 1.0, 10, SeededRng(0)), g.sum(axis=0) / 10, atol=1e-15)


def test_aggregate_empty_lot_is_noise_over_l():
    out = noisy_aggregate(np.zeros((0, 4)), 2.0, 1.5, 8, SeededRng(5))
    ref = SeededRng(5).standard_normal(4) * 3.0 / 8
    assert np.allclose(out, ref)
    with pytest.raises(ValueError):
        noisy_aggregate(np.zeros((0, 0)), 1.0, 1.0, 4, SeededRng(0))


def test_aggregate_noise_statistics():
    sigma, clip, lot, trials = 1.3, 2.0, 16, 100_000
    g = clip_rows(SeededRng(6).standard_normal((5, 6)), clip)
    rng = SeededRng(7)
    samples = np.array([noisy_aggregate(g, sigma, clip, lot, rng) for _ in range(trials)])
    target = (sigma * clip / lot) ** 2
    assert np.all(np.abs(samples.var(axis=0) / target - 1) < 0.05)
    tol = 4 * sigma * clip / (lot * math.sqrt(trials))
    assert np.all(np.abs(samples.mean(axis=0) - g.sum(axis=0) / lot) < tol)


# -- accountant --------------------------------------------------------------------


def test_full_batch_matches_closed_form_on_same_grid():
    eps = rdp_epsilon(1.0, 1.0, 1, 1e-5)
    assert abs(eps - gaussian_eps_dense(1.0, 1, 1e-5, DEFAULT_ORDERS)) < 1e-6
    # a dense continuous minimisation can only go lower, and not by much
    dense = gaussian_eps_dense(1.0, 1, 1e-5, np.linspace(1.01, 256, 2_000_000))
    assert dense <= eps < dense * 1.01


def test_subsampled_matches_quadrature():
    orders = (1.5, 2.0, 4.0, 8.0, 16.0, 32.0)
    for sigma, q, steps in [(1.0, 0.1, 100), (2.0, 0.01, 1000), (0.8, 0.25, 10)]:
        ours = rdp_epsilon(sigma, q, steps, 1e-5, orders)
        ref = quadrature_epsilon(sigma, q, steps, 1e-5, orders)
        assert abs(ours - ref) < 1e-8 * max(1.0, ref)


def test_per_step_bound_between_zero_and_full_batch():
    for a in (1.5, 2.0, 10.0, 64.0):
        full = rdp_per_step(1.0, 1.5, a)
        assert 0 < rdp_per_step(0.3, 1.5, a) <= full + 1e-15
        assert rdp_per_step(0.0, 1.5, a) == 0.0


def test_zero_sigma_is_infinite():
    assert rdp_epsilon(0.0, 0.1, 10, 1e-5) == math.inf
    assert rdp_per_step(0.5, 0.0, 2.0) == math.inf


@given(
    st.floats(0.5, 20.0),
    st.floats(0.001, 1.0),
    st.integers(1, 5000),
    st.floats(1.01, 3.0),
    st.floats(1.01, 3.0),
)
@settings(max_examples=100, deadline=None)
def test_accountant_monotonicity(sigma, q, steps, fs, fq):
    base = rdp_epsilon(sigma, q, steps, 1e-5)
    assert rdp_epsilon(sigma, q, steps + 1, 1e-5) > base
    assert rdp_epsilon(sigma * fs, q, steps, 1e-5) < base
    assert rdp_epsilon(sigma, min(1.0, q * fq), steps, 1e-5) >= base - 1e-12


# -- calibration -------------------------------------------------------------------


@pytest.mark.parametrize("eps", [0.22, 0.5, 1.0, 2.0])
def test_calibration_round_trip(eps):
    q, steps = 64 / 455, 107
    sigma = calibrate_sigma(eps, 1e-5, q, steps)
    assert rdp_epsilon(sigma, q, steps, 1e-5) <= eps
    assert rdp_epsilon(sigma * (1 - 2e-3), q, steps, 1e-5) > eps


def test_calibration_monotone():
    q, steps = 0.1, 300
    assert calibrate_sigma(2.0, 1e-5, q, steps) < calibrate_sigma(0.22, 1e-5, q, steps)


def test_calibration_matches_root_finding_oracle():
    orders = DEFAULT_ORDERS

    def f(sigma):
        return quadrature_epsilon(sigma, 0.1, 500, 1e-5, orders[:64]) - 1.0

    ref = optimize.brentq(f, 0.5, 50.0, xtol=1e-10)
    got = calibrate_sigma(1.0, 1e-5, 0.1, 500)
    assert abs(got / ref - 1) < 5e-3


def test_calibration_errors():
    with pytest.raises(CalibrationError):
        calibrate_sigma(1e-9, 1e-300, 1.0, 10**9)
    with pytest.raises(CalibrationError):
        calibrate_sigma(0.0, 1e-5, 0.1, 10)


def test_config_validation():
    for bad in (dict(clip=0), dict(sigma=-1.0), dict(delta=0.0), dict(target_epsilon=0), dict(lot_size=0)):
        with pytest.raises(ValueError):
            DpConfig(**bad)
    dp = DpConfig(lot_size=64, epochs=15)
    assert dp.sampling_rate(455) == pytest.approx(64 / 455)
    assert dp.steps(455) == 107
    assert DpConfig(lot_size=1000).sampling_rate(10) == 1.0


# -- training ------------------------------------------------------------------------


def _reference_sgd(ds, idx, cfg, steps, lr):
    p = init_params(SeededRng(derive_seed(cfg.seed, "ann-init")), ds.n_features, cfg.hidden, ds.num_classes)
    for _ in range(steps):
        p = sgd_step(p, mlp_backward(mlp_forward(p, ds.features[idx])[1], ds.labels[idx])[1], lr)
    return p


def test_degenerate_dpsgd_is_full_batch_sgd(iris):
    plan = make_split_plan(iris, 0.2, 0)
    n = len(plan.target_train)
    cfg = TrainConfig(seed=3, hidden=32)
    dp = DpConfig(clip=1e9, sigma=0.0, lot_size=n, epochs=10)
    ref = _reference_sgd(iris, plan.target_train, cfg, 10, dp.lr)
    res = train_dpsgd("ann", iris, plan.target_train, plan.target_test, dp, cfg)
    assert res.steps == 10 and res.budget.epsilon == math.inf
    assert np.max(np.abs(res.params.flatten() - ref.flatten())) < 1e-9
    fast = train_dpsgd("ann", iris, plan.target_train, plan.target_test, dp, cfg, skip_noise=True)
    assert np.array_equal(fast.params.flatten(), ref.flatten())


def test_per_example_grads_average_to_batch_grad(iris):
    x, y = iris.features[:20], iris.labels[:20]
    p = init_params(SeededRng(1), 4, 16, 3)
    per = ann_pe(p, x, y)
    assert np.max(np.abs(per.mean(axis=0) - mlp_backward(mlp_forward(p, x)[1], y)[1].flatten())) < 1e-10
    spikes = (SeededRng(2).uniform((10, 20, 4)) < x).astype(np.float64)
    lif = LifConfig(steps=10)
    per = snn_pe(p, spikes, y, lif)
    batch = snn_backward(snn_forward(p, spikes, lif)[1], y)[1].flatten()
    assert np.max(np.abs(per.mean(axis=0) - batch)) < 1e-10


def test_dpsgd_deterministic_and_history(iris, tmp_path):
    plan = make_split_plan(iris, 0.2, 1)
    dp = DpConfig(target_epsilon=1.0, epochs=2)
    cfg = TrainConfig(seed=2, hidden=32)
    a = train_dpsgd("ann", iris, plan.target_train, plan.target_test, dp, cfg, record_every=2)
    b = train_dpsgd("ann", iris, plan.target_train, plan.target_test, dp, cfg)
    assert np.array_equal(a.params.flatten(), b.params.flatten())
    assert a.budget.epsilon <= 1.0
    spent = [h["epsilon_spent"] for h in a.history]
    assert spent == sorted(spent) and a.history[-1]["step"] == a.steps
    a.write_history(tmp_path / "h.csv")
    assert (tmp_path / "h.csv").read_text().splitlines()[0] == "step,epsilon_spent,train_acc,test_acc"


def test_dpsgd_rejects_unknown_kind(iris):
    with pytest.raises(ValueError):
        train_dpsgd("cnn", iris, [0, 1], [2], DpConfig(sigma=1.0), TrainConfig())


@pytest.mark.slow
def test_more_budget_more_accuracy(wdbc):
    lo, hi = [], []
    for s in range(5):
        plan = make_split_plan(wdbc, 0.2, s)
        cfg = TrainConfig(seed=s)
        lo.append(train_dpsgd("ann", wdbc, plan.target_train, plan.target_test, DpConfig(target_epsilon=0.22), cfg).test_acc)
        hi.append(train_dpsgd("ann", wdbc, plan.target_train, plan.target_test, DpConfig(target_epsilon=2.0), cfg).test_acc)
    assert np.median(hi) >= np.median(lo)
