import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from randomgen import Xoshiro256

from neuromia.numeric import (
    SeededRng,
    ShapeError,
    check_finite,
    cross_entropy,
    derive_seed,
    expand_seed,
    gaussian,
    log_softmax,
    matmul,
    sample_without_replacement,
    shuffle_indices,
    softmax,
    splitmix64,
)
from oracles import PyXoshiro, numeric_grad, py_splitmix64, rel_error


def rng_from_state(state):
    r = SeededRng(0)
    st_ = r._bits.state
    st_["s"] = np.array(state, dtype=np.uint64)
    r._bits.state = st_
    return r


def test_reference_state_first_output():
    assert rng_from_state([1, 2, 3, 4]).next_u64() == 11520
    assert PyXoshiro([1, 2, 3, 4]).next() == 11520


@given(st.integers(min_value=0, max_value=2**64 - 1))
@settings(max_examples=50)
def test_stream_matches_pure_python(seed):
    ref = PyXoshiro(expand_seed(seed))
    got = SeededRng(seed).raw(20)
    assert [int(v) for v in got] == [ref.next() for _ in range(20)]


@given(st.integers(min_value=0, max_value=2**64 - 1))
def test_splitmix_matches_oracle(state):
    assert splitmix64(state) == py_splitmix64(state)


def test_same_seed_same_stream_and_children_differ():
    a, b = SeededRng(42), SeededRng(42)
    assert np.array_equal(a.raw(100), b.raw(100))
    assert derive_seed(42, "x") != derive_seed(42, "y")
    assert derive_seed(42, "x") == derive_seed(42, "x")
    assert not np.array_equal(SeededRng(42).child("a").raw(4), SeededRng(42).child("b").raw(4))


def test_uniform_range_and_mean():
    u = SeededRng(1).uniform(100_000)
    assert u.min() >= 0.0 and u.max() < 1.0
    assert abs(u.mean() - 0.5) < 4 * math.sqrt(1 / 12 / 1e5)


def test_integer_bounds():
    r = SeededRng(3)
    vals = [r.integer(7) for _ in range(5000)]
    assert set(vals) == set(range(7))


def test_standard_normal_moments_and_cache():
    z = SeededRng(5).standard_normal(200_000)
    assert abs(z.mean()) < 4 / math.sqrt(2e5)
    assert abs(z.var() - 1.0) < 0.02
    # drawing one at a time yields the same sequence as a bulk draw
    r1, r2 = SeededRng(9), SeededRng(9)
    bulk = r1.standard_normal(7)
    single = [r2.standard_normal() for _ in range(7)]
    assert np.allclose(bulk, single, rtol=0, atol=0)


def test_gaussian_std_zero_and_negative():
    r = SeededRng(0)
    assert gaussian(r, 3.0, 0.0) == 3.0
    assert np.all(gaussian(r, 1.5, 0.0, (4,)) == 1.5)
    with pytest.raises(ValueError):
        gaussian(r, 0.0, -1.0)


@given(st.integers(0, 200), st.integers(0, 2**32))
def test_shuffle_is_permutation(n, seed):
    perm = shuffle_indices(SeededRng(seed), n)
    assert sorted(perm.tolist()) == list(range(n))


@given(st.integers(1, 100), st.data())
def test_sample_without_replacement_distinct(n, data):
    k = data.draw(st.integers(0, n))
    s = sample_without_replacement(SeededRng(n * 7 + k), n, k)
    assert len(set(s.tolist())) == k and all(0 <= i < n for i in s)


def test_shuffle_uniformity_small():
    r = SeededRng(11)
    counts = {}
    for _ in range(12000):
        key = tuple(shuffle_indices(r, 3))
        counts[key] = counts.get(key, 0) + 1
    assert len(counts) == 6
    assert all(abs(c - 2000) < 4 * math.sqrt(2000) for c in counts.values())


def test_randomgen_state_injection_is_used():
    # guards against silently seeding randomgen's own way
    bg = Xoshiro256(123)
    assert int(bg.random_raw()) != SeededRng(123).next_u64()


def test_matmul_shape_errors():
    with pytest.raises(ShapeError):
        matmul(np.ones((2, 3)), np.ones((2, 3)))
    with pytest.raises(ShapeError):
        matmul(np.ones(3), np.ones((3, 1)))
    assert np.allclose(matmul(np.eye(2), [[1.0, 2.0], [3.0, 4.0]]), [[1, 2], [3, 4]])


@given(st.lists(st.floats(-500, 500), min_size=1, max_size=10))
def test_softmax_normalized_and_shift_invariant(z):
    z = np.array([z])
    p = softmax(z)
    assert np.isclose(p.sum(), 1.0)
    assert np.allclose(p, softmax(z + 123.0))
    assert np.allclose(np.exp(log_softmax(z)), p)


def test_cross_entropy_gradient_matches_finite_differences():
    r = SeededRng(2)
    logits = r.standard_normal((5, 4))
    labels = np.array([0, 3, 1, 1, 2])
    _, grad = cross_entropy(logits, labels)
    num = numeric_grad(lambda: cross_entropy(logits, labels)[0], logits, 1e-6)
    assert rel_error(grad, num) < 1e-6


def test_cross_entropy_label_checks():
    with pytest.raises(ValueError):
        cross_entropy(np.zeros((2, 3)), np.array([0, 3]))
    with pytest.raises(ShapeError):
        cross_entropy(np.zeros((2, 3)), np.array([0]))


def test_check_finite():
    check_finite(np.ones(3))
    with pytest.raises(FloatingPointError):
        check_finite(np.array([1.0, np.nan]))


def test_matmul_against_triple_loop():
    r = SeededRng(4)
    a, b = r.standard_normal((7, 5)), r.standard_normal((5, 3))
    ref = np.array([[sum(a[i, t] * b[t, j] for t in range(5)) for j in range(3)] for i in range(7)])
    assert np.max(np.abs(matmul(a, b) - ref)) < 1e-12
    assert matmul([[2.0]], [[3.0]])[0, 0] == 6.0


def test_softmax_examples():
    assert np.allclose(softmax(np.zeros(3)), 1 / 3, atol=1e-12)
    p = softmax(np.array([1000.0, 0.0]))
    assert np.all(np.isfinite(p)) and p[0] == pytest.approx(1.0) and p[1] < 1e-300 + 1e-12


def test_gaussian_large_sample_moments():
    z = gaussian(SeededRng(8), 0.0, 1.0, 1_000_000)
    assert abs(z.mean()) < 4 / math.sqrt(1e6)
    w = gaussian(SeededRng(9), 0.0, 2.0, 1_000_000)
    assert abs(w.var() - 4.0) < 0.05 * 4.0


def test_shuffle_small_cases_and_determinism():
    assert shuffle_indices(SeededRng(0), 0).size == 0
    assert shuffle_indices(SeededRng(0), 1).tolist() == [0]
    assert np.array_equal(shuffle_indices(SeededRng(5), 10), shuffle_indices(SeededRng(5), 10))
